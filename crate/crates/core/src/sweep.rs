//! Privacy-utility sweeps over ε and K.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::attacks::{
    aligned_pairs, analytic_inversion_success, inversion_attack, query_attack, utility_proxy, AttackError,
    QueryAttackConfig,
};
use crate::embed::{EmbeddingTable, TokenId};
use crate::mapping::MappingTable;
use crate::sampler::{dp_ratio_check, SamplerError, SamplerParams};
use crate::sanitizer::{Document, Mode, NumberPolicy, SanitizeConfig, SanitizeError, Sanitizer};

/// Column order of the sweep CSV.
pub const SWEEP_CSV_HEADER: &str = "k,measure,epsilon,mode,tokens,in_vocab_tokens,retention_rate,mean_cosine,\
inversion_success,privacy_level,analytic_inversion_success,query_n_median,query_tokens,worst_dp_ratio,dp_bound";

/// Number of frequent corpus tokens attacked when none are named.
const AUTO_QUERY_TOKENS: usize = 5;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Sanitize(#[from] SanitizeError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("sweeps support custext and custext_plus modes only")]
    UnsupportedMode,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub mode: Mode,
    pub stopwords: HashSet<String>,
    pub seed: u64,
    pub number_policy: NumberPolicy,
    /// Tokens for the query attack; the most frequent corpus tokens when empty.
    pub query_tokens: Vec<String>,
    pub query: QueryAttackConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub measure: String,
    pub epsilon: f64,
    pub mode: Mode,
    pub tokens: u64,
    pub in_vocab_tokens: u64,
    pub retention_rate: f64,
    pub mean_cosine: Option<f64>,
    pub inversion_success: f64,
    pub privacy_level: f64,
    pub analytic_inversion_success: f64,
    pub query_n_median: Option<u64>,
    pub query_tokens: Vec<String>,
    pub worst_dp_ratio: f64,
    pub dp_bound: f64,
}

fn frequent_tokens(mapping: &MappingTable, doc: &Document, stopwords: &HashSet<String>, n: usize) -> Vec<String> {
    let mut counts: HashMap<TokenId, u64> = HashMap::new();
    for t in doc.records.iter().flat_map(|r| r.texts()) {
        if stopwords.contains(t) {
            continue;
        }
        if let Some(id) = mapping.token(t) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(TokenId, u64)> = counts.into_iter().collect();
    ranked.sort_by_key(|&(id, c)| (std::cmp::Reverse(c), id));
    ranked.into_iter().take(n).map(|(id, _)| mapping.surface(id).to_owned()).collect()
}

fn median(mut v: Vec<u64>) -> Option<u64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

/// One row per (mapping, ε) cell, in input order. `table` enables the mean
/// cosine column.
pub fn sweep(
    doc: &Document,
    mappings: &[&MappingTable],
    table: Option<&EmbeddingTable>,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>, SweepError> {
    if config.mode == Mode::Baseline {
        return Err(SweepError::UnsupportedMode);
    }
    let passthrough: HashSet<String> = match config.mode {
        Mode::CustextPlus => config.stopwords.clone(),
        _ => HashSet::new(),
    };
    let original: Vec<Vec<String>> = doc.records.iter().map(|r| r.texts().map(str::to_owned).collect()).collect();
    let mut rows = Vec::new();
    for mapping in mappings {
        let query_tokens = if config.query_tokens.is_empty() {
            frequent_tokens(mapping, doc, &passthrough, AUTO_QUERY_TOKENS)
        } else {
            config.query_tokens.clone()
        };
        let query_ids = query_tokens
            .iter()
            .map(|s| mapping.token(s).ok_or_else(|| AttackError::UnknownSurface(s.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        for &epsilon in &config.epsilons {
            let params = SamplerParams::new(epsilon)?;
            let sanitize_config = SanitizeConfig {
                epsilon,
                k: mapping.k(),
                measure: mapping.measure(),
                mode: config.mode,
                stopwords: config.stopwords.clone(),
                seed: config.seed,
                number_policy: config.number_policy,
                lowercase: true,
            };
            let sanitizer = Sanitizer::new(mapping, &sanitize_config, table)?;
            let sanitized: Vec<Vec<String>> = sanitizer
                .sanitize_document(doc)?
                .into_iter()
                .map(|r| r.tokens)
                .collect();
            let pairs = aligned_pairs(mapping, &original, &sanitized, &passthrough)?;
            let inversion = inversion_attack(mapping, params, pairs.iter().copied());
            let (in_vocab_tokens, retention_rate, mean_cosine) = match table {
                Some(t) => {
                    let u = utility_proxy(&original, &sanitized, t, &passthrough)?;
                    (u.in_vocab_tokens, u.retention_rate, u.mean_cosine)
                }
                None => {
                    let kept = pairs.iter().filter(|(x, y)| x == y).count();
                    let rate = if pairs.is_empty() { 0.0 } else { kept as f64 / pairs.len() as f64 };
                    (pairs.len() as u64, rate, None)
                }
            };
            let mut ns = Vec::with_capacity(query_ids.len());
            for &x in &query_ids {
                ns.push(query_attack(mapping, x, params, &config.query)?.n);
            }
            let dp = dp_ratio_check(mapping, params);
            rows.push(SweepRow {
                k: mapping.k(),
                measure: mapping.measure().name().to_owned(),
                epsilon,
                mode: config.mode,
                tokens: original.iter().map(|r| r.len() as u64).sum(),
                in_vocab_tokens,
                retention_rate,
                mean_cosine,
                inversion_success: inversion.success_rate,
                privacy_level: inversion.privacy_level(),
                analytic_inversion_success: analytic_inversion_success(mapping, params),
                query_n_median: median(ns),
                query_tokens: query_tokens.clone(),
                worst_dp_ratio: dp.worst_ratio(),
                dp_bound: dp.bound,
            });
        }
    }
    Ok(rows)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        let mode = match r.mode {
            Mode::Custext => "custext",
            Mode::CustextPlus => "custext_plus",
            Mode::Baseline => "baseline",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{},{:.6},{:.6},{:.6},{},{},{:.9},{:.9}",
            r.k,
            r.measure,
            r.epsilon,
            mode,
            r.tokens,
            r.in_vocab_tokens,
            r.retention_rate,
            opt(r.mean_cosine.map(|c| format!("{c:.6}"))),
            r.inversion_success,
            r.privacy_level,
            r.analytic_inversion_success,
            opt(r.query_n_median),
            crate::sampler::csv_field(&r.query_tokens.join(" ")),
            r.worst_dp_ratio,
            r.dp_bound,
        )?;
    }
    Ok(())
}
