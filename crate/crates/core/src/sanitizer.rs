//! Document sanitization: tokenization, stopword passthrough, OOV and
//! numeric handling, and per-token replacement.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbeddingTable, Measure, TokenId};
use crate::mapping::MappingTable;
use crate::rng::RandomStream;
use crate::sampler::{baseline_probabilities, dp_to_mldp_epsilon, em_sample, sample_index, SamplerError, SamplerParams};

#[derive(Debug, Error)]
pub enum SanitizeError {
    #[error("mapping was built with K={mapping}, but the configuration asks for K={config}")]
    KMismatch { mapping: usize, config: usize },
    #[error("mapping was built with the {mapping} measure, but the configuration asks for {config}")]
    MeasureMismatch { mapping: Measure, config: Measure },
    #[error("embedding table does not match the vocabulary hash recorded in the mapping")]
    VocabMismatch,
    #[error("custext_plus mode requires a nonempty stopword list")]
    MissingStopwords,
    #[error("baseline mode requires the embedding table the mapping was built from")]
    MissingEmbeddings,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected} tab-separated columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: text column {column} is out of range ({found} columns)")]
    MissingColumn { line: usize, column: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every in-vocabulary token is replaced.
    Custext,
    /// Stopwords are copied unchanged; everything else as in `Custext`.
    CustextPlus,
    /// Full-vocabulary metric-DP sampling, rescaled to the same ε-DP level.
    Baseline,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "custext" => Ok(Mode::Custext),
            "custext_plus" | "custext+" => Ok(Mode::CustextPlus),
            "baseline" | "mldp" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode {other:?} (expected custext, custext_plus or baseline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberPolicy {
    RandomizeDigits,
    Retain,
}

impl FromStr for NumberPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "randomize_digits" | "randomize" => Ok(NumberPolicy::RandomizeDigits),
            "retain" | "keep" => Ok(NumberPolicy::Retain),
            other => Err(format!("unknown number policy {other:?} (expected randomize_digits or retain)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SanitizeConfig {
    pub epsilon: f64,
    pub k: usize,
    pub measure: Measure,
    pub mode: Mode,
    pub stopwords: HashSet<String>,
    pub seed: u64,
    pub number_policy: NumberPolicy,
    pub lowercase: bool,
}

impl SanitizeConfig {
    /// Configuration matching `mapping`, in plain `Custext` mode.
    pub fn for_mapping(mapping: &MappingTable, epsilon: f64, seed: u64) -> Self {
        Self {
            epsilon,
            k: mapping.k(),
            measure: mapping.measure(),
            mode: Mode::Custext,
            stopwords: HashSet::new(),
            seed,
            number_policy: NumberPolicy::RandomizeDigits,
            lowercase: true,
        }
    }
}

/// Reads a stopword list: one surface per line, blank lines ignored.
pub fn read_stopwords<R: Read>(reader: R, lowercase: bool) -> std::io::Result<HashSet<String>> {
    let mut set = HashSet::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let word = line.trim();
        if !word.is_empty() {
            set.insert(if lowercase { word.to_lowercase() } else { word.to_owned() });
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordToken {
    pub text: String,
    /// Byte range of the token in the original line.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Record {
    pub tokens: Vec<RecordToken>,
}

impl Record {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub records: Vec<Record>,
}

impl Document {
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>, lowercase: bool) -> Self {
        Self {
            records: lines.into_iter().map(|l| tokenize(l, lowercase)).collect(),
        }
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace() && !c.is_ascii())
}

/// Splits on whitespace, then peels leading and trailing punctuation into
/// single-character tokens.
pub fn tokenize(line: &str, lowercase: bool) -> Record {
    let mut tokens = Vec::new();
    let mut push = |start: usize, end: usize| {
        let raw = &line[start..end];
        tokens.push(RecordToken {
            text: if lowercase { raw.to_lowercase() } else { raw.to_owned() },
            span: start..end,
        });
    };
    let mut offset = 0;
    for word in line.split_whitespace() {
        let start = offset + line[offset..].find(word).expect("word comes from line");
        let end = start + word.len();
        offset = end;

        let lead = word.char_indices().find(|&(_, c)| !is_punct(c)).map(|(i, _)| i);
        let Some(lead) = lead else {
            for (i, c) in word.char_indices() {
                push(start + i, start + i + c.len_utf8());
            }
            continue;
        };
        let trail = word
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .expect("word has a non-punctuation char");
        for (i, c) in word[..lead].char_indices() {
            push(start + i, start + i + c.len_utf8());
        }
        push(start + lead, start + trail);
        for (i, c) in word[trail..].char_indices() {
            push(start + trail + i, start + trail + i + c.len_utf8());
        }
    }
    Record { tokens }
}

/// Numeric surfaces: at least one ASCII digit, otherwise only digits and
/// `.`, `,`, `-`, `+` separators.
pub fn is_numeric(surface: &str) -> bool {
    surface.bytes().any(|b| b.is_ascii_digit()) && surface.bytes().all(|b| b.is_ascii_digit() || b".,-+".contains(&b))
}

fn randomize_digits<R: Rng + ?Sized>(surface: &str, rng: &mut R) -> String {
    surface
        .chars()
        .map(|c| {
            if c.is_ascii_digit() {
                char::from(b'0' + rng.gen_range(0..10u8))
            } else {
                c
            }
        })
        .collect()
}

/// What happened to one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenAction {
    Replaced,
    StopwordPassthrough,
    OovRetained,
    NumericRandomized,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TokenCounts {
    pub records: u64,
    pub tokens: u64,
    pub replaced: u64,
    pub stopword_passthrough: u64,
    pub oov_retained: u64,
    pub numeric_randomized: u64,
}

impl TokenCounts {
    pub fn add(&mut self, action: TokenAction) {
        self.tokens += 1;
        match action {
            TokenAction::Replaced => self.replaced += 1,
            TokenAction::StopwordPassthrough => self.stopword_passthrough += 1,
            TokenAction::OovRetained => self.oov_retained += 1,
            TokenAction::NumericRandomized => self.numeric_randomized += 1,
        }
    }

    pub fn merge(&mut self, other: &TokenCounts) {
        self.records += other.records;
        self.tokens += other.tokens;
        self.replaced += other.replaced;
        self.stopword_passthrough += other.stopword_passthrough;
        self.oov_retained += other.oov_retained;
        self.numeric_randomized += other.numeric_randomized;
    }
}

/// A sanitized record: output surfaces aligned with the input tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SanitizedRecord {
    pub tokens: Vec<String>,
    pub actions: Vec<TokenAction>,
}

impl SanitizedRecord {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Validated sanitization context. Pure given a record index, so records can
/// be processed in any order or in parallel.
#[derive(Debug)]
pub struct Sanitizer<'a> {
    mapping: &'a MappingTable,
    config: &'a SanitizeConfig,
    params: SamplerParams,
    stream: RandomStream,
    baseline: Option<(&'a EmbeddingTable, f64)>,
}

impl<'a> Sanitizer<'a> {
    /// Checks the mapping against the configuration. Baseline mode needs the
    /// embedding table the mapping was built from.
    pub fn new(
        mapping: &'a MappingTable,
        config: &'a SanitizeConfig,
        embeddings: Option<&'a EmbeddingTable>,
    ) -> Result<Self, SanitizeError> {
        let params = SamplerParams::new(config.epsilon)?;
        if mapping.k() != config.k {
            return Err(SanitizeError::KMismatch {
                mapping: mapping.k(),
                config: config.k,
            });
        }
        if mapping.measure() != config.measure {
            return Err(SanitizeError::MeasureMismatch {
                mapping: mapping.measure(),
                config: config.measure,
            });
        }
        if let Some(table) = embeddings {
            if &table.fingerprint() != mapping.vocab_hash() {
                return Err(SanitizeError::VocabMismatch);
            }
        }
        if config.mode == Mode::CustextPlus && config.stopwords.is_empty() {
            return Err(SanitizeError::MissingStopwords);
        }
        let baseline = match config.mode {
            Mode::Baseline => {
                if config.measure != Measure::Euclidean {
                    return Err(SamplerError::NonMetric(config.measure).into());
                }
                let table = embeddings.ok_or(SanitizeError::MissingEmbeddings)?;
                let d_max = table.max_euclidean_distance();
                let eps_prime = if d_max > 0.0 {
                    dp_to_mldp_epsilon(config.epsilon, d_max)
                } else {
                    config.epsilon
                };
                log::info!("baseline: d_max = {d_max}, eps' = {eps_prime}");
                Some((table, eps_prime))
            }
            _ => None,
        };
        Ok(Self {
            mapping,
            config,
            params,
            stream: RandomStream::new(config.seed),
            baseline,
        })
    }

    pub fn config(&self) -> &SanitizeConfig {
        self.config
    }

    pub fn mapping(&self) -> &MappingTable {
        self.mapping
    }

    /// Metric-DP parameter used in baseline mode.
    pub fn baseline_eps_prime(&self) -> Option<f64> {
        self.baseline.map(|(_, e)| e)
    }

    pub fn sanitize_token(&self, record: u64, index: u64, surface: &str) -> Result<(String, TokenAction), SanitizeError> {
        if self.config.mode == Mode::CustextPlus && self.config.stopwords.contains(surface) {
            return Ok((surface.to_owned(), TokenAction::StopwordPassthrough));
        }
        let mut rng = self.stream.position(record, index);
        if let Some(x) = self.mapping.token(surface) {
            let y = match self.baseline {
                Some((table, eps_prime)) => {
                    let p = baseline_probabilities(table, Measure::Euclidean, x, eps_prime)?;
                    TokenId(sample_index(&p, &mut rng) as u32)
                }
                None => em_sample(self.mapping, x, self.params, &mut rng)?,
            };
            return Ok((self.mapping.surface(y).to_owned(), TokenAction::Replaced));
        }
        if is_numeric(surface) && self.config.number_policy == NumberPolicy::RandomizeDigits {
            return Ok((randomize_digits(surface, &mut rng), TokenAction::NumericRandomized));
        }
        Ok((surface.to_owned(), TokenAction::OovRetained))
    }

    pub fn sanitize_record(&self, index: u64, record: &Record) -> Result<SanitizedRecord, SanitizeError> {
        let mut tokens = Vec::with_capacity(record.len());
        let mut actions = Vec::with_capacity(record.len());
        for (j, tok) in record.tokens.iter().enumerate() {
            let (out, action) = self.sanitize_token(index, j as u64, &tok.text)?;
            tokens.push(out);
            actions.push(action);
        }
        Ok(SanitizedRecord { tokens, actions })
    }

    /// Sanitizes every record; record `i` uses substreams keyed by `i`.
    pub fn sanitize_document(&self, doc: &Document) -> Result<Vec<SanitizedRecord>, SanitizeError> {
        self.sanitize_records(0, &doc.records)
    }

    /// Sanitizes a batch whose first record has global index `first_index`.
    pub fn sanitize_records(&self, first_index: u64, records: &[Record]) -> Result<Vec<SanitizedRecord>, SanitizeError> {
        let run = |(i, r): (usize, &Record)| self.sanitize_record(first_index + i as u64, r);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            records.par_iter().enumerate().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            records.iter().enumerate().map(run).collect()
        }
    }
}
