use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use custext::sanitizer::{Mode, NumberPolicy};
use custext::Measure;

pub const SWEEP_COLUMNS_HELP: &str = "\
CSV columns, one row per (mapping, epsilon) cell:
  k                           group size K of the mapping
  measure                     euclidean or cosine
  epsilon                     privacy parameter
  mode                        custext or custext_plus
  tokens                      corpus tokens
  in_vocab_tokens             in-vocabulary, non-stopword tokens
  retention_rate              fraction of those left unchanged
  mean_cosine                 mean cosine(input, output); empty without --embeddings
  inversion_success           inversion attack success on the sanitized corpus
  privacy_level               1 - inversion_success
  analytic_inversion_success  exact inversion success, uniform input prior
  query_n_median              median query-attack N over the attacked tokens
  query_tokens                attacked tokens, space separated
  worst_dp_ratio              largest Pr[y|x] / Pr[y|x'] over all groups
  dp_bound                    e^epsilon";

/// Token-level text sanitization with ε-differential privacy.
#[derive(Debug, Parser)]
#[command(name = "custext", version, args_override_self = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Worker threads; defaults to the number of cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the run summary as JSON to this file instead of stderr.
    #[arg(long = "summary-json", alias = "summary", global = true, value_name = "PATH")]
    pub summary_json: Option<PathBuf>,
    /// TOML file with default flag values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition an embedding vocabulary into groups and write the mapping artifact.
    BuildMap(BuildMapArgs),
    /// Sanitize a plain-text or TSV corpus.
    Sanitize(SanitizeArgs),
    /// Run privacy attacks against a mapping.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Privacy-utility sweep over epsilon and K.
    #[command(after_long_help = SWEEP_COLUMNS_HELP)]
    Sweep(SweepArgs),
    /// Check the worst-case probability ratio against e^epsilon.
    VerifyDp(VerifyDpArgs),
    /// Export a mapping artifact as JSON lines, one group per line.
    ExportJsonl(ExportArgs),
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Smallest number of repeated queries that identifies a token with the given confidence.
    Query(QueryArgs),
    /// Bayes-optimal inversion of a sanitized corpus against its original.
    Invert(InvertArgs),
}

#[derive(Debug, Args)]
pub struct BuildMapArgs {
    /// Embedding file: one token per line followed by space-separated floats.
    #[arg(long, value_name = "FILE")]
    pub embeddings: PathBuf,
    /// Group size.
    #[arg(long = "K", visible_alias = "k", default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value = "euclidean")]
    pub measure: Measure,
    /// Seed order: vocab (file order) or frequency (needs --frequencies).
    #[arg(long, default_value = "vocab", value_parser = ["vocab", "frequency"])]
    pub order: String,
    /// "token count" lines for frequency order.
    #[arg(long, value_name = "FILE")]
    pub frequencies: Option<PathBuf>,
    /// Expected vector dimension; checked on every line.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the JSON-lines debug export.
    #[arg(long, value_name = "FILE")]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SanitizeArgs {
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value = "custext")]
    pub mode: Mode,
    /// Stopword list, one surface per line (required for custext_plus).
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Treat the input as TSV and sanitize this zero-based column only.
    #[arg(long = "tsv-col")]
    pub tsv_col: Option<usize>,
    /// Copy the first TSV line unchanged.
    #[arg(long = "tsv-header", requires = "tsv_col")]
    pub tsv_header: bool,
    /// Embedding file the mapping was built from (required for baseline mode).
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[arg(long = "number-policy", default_value = "randomize_digits")]
    pub number_policy: NumberPolicy,
    /// Keep the original case of input tokens.
    #[arg(long = "no-lowercase")]
    pub no_lowercase: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    /// One or more comma-separated values.
    #[arg(long, required = true, action = ArgAction::Set, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
    /// One or more comma-separated tokens.
    #[arg(long, required = true, action = ArgAction::Set, value_delimiter = ',')]
    pub token: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long = "max-queries", default_value_t = 1 << 30)]
    pub max_queries: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the result CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    /// Sanitized corpus.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Original corpus, aligned line by line.
    #[arg(long, value_name = "FILE")]
    pub truth: PathBuf,
    /// Stopwords passed through unchanged; excluded from the attack.
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    #[arg(long = "no-lowercase")]
    pub no_lowercase: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Mapping artifacts, comma separated.
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', value_name = "FILES")]
    pub map: Vec<PathBuf>,
    /// Directory whose *.bin mapping artifacts are swept in name order.
    #[arg(long = "map-dir", value_name = "DIR")]
    pub map_dir: Option<PathBuf>,
    /// Build mappings for these K values from --embeddings instead.
    #[arg(long = "K", visible_alias = "k", action = ArgAction::Set, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Measure for mappings built from --K.
    #[arg(long, default_value = "euclidean")]
    pub measure: Measure,
    /// Comma-separated; without it the CSV holds only the header.
    #[arg(long, action = ArgAction::Set, value_delimiter = ',')]
    pub epsilons: Vec<f64>,
    /// Plain-text corpus, one record per line.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Enables the mean_cosine column and --K.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value = "custext")]
    pub mode: Mode,
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tokens for the query attack; defaults to the 5 most frequent corpus tokens.
    #[arg(long = "query-token", action = ArgAction::Set, value_delimiter = ',')]
    pub query_token: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long = "number-policy", default_value = "randomize_digits")]
    pub number_policy: NumberPolicy,
}

#[derive(Debug, Args)]
pub struct VerifyDpArgs {
    #[arg(long, value_name = "FILE", required_unless_present = "baseline")]
    pub map: Option<PathBuf>,
    /// One or more comma-separated values.
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', required_unless_present = "baseline")]
    pub epsilon: Vec<f64>,
    /// Per-group worst ratios as CSV (the last epsilon when several are given).
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Check the full-vocabulary metric-DP baseline instead, at ε = ε'·d_max.
    #[arg(long, requires_all = ["embeddings", "eps_prime"], conflicts_with = "map")]
    pub baseline: bool,
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Metric-DP parameter ε' for --baseline.
    #[arg(long = "eps-prime", action = ArgAction::Set, value_delimiter = ',')]
    pub eps_prime: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
