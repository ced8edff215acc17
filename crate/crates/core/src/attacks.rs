//! Empirical privacy and utility measurements.
//!
//! * Query attack: the adversary requests `n` independent sanitizations of the
//!   same token and guesses the unique most frequent output. `N` is the
//!   smallest `n` at which that guess is right with the target confidence.
//! * Inversion attack: the adversary maps each observed output to the input
//!   that most likely produced it, using the exact mechanism probabilities.
//!   This is an analytic stand-in for a masked-language-model attack.
//! * Utility proxy: token retention and embedding similarity between inputs
//!   and outputs.

use std::collections::HashSet;

use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::Binomial;
use serde::Serialize;
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingTable, Measure, TokenId};
use crate::mapping::MappingTable;
use crate::rng::{Domain, RandomStream};
use crate::sampler::{em_probabilities, SamplerError, SamplerParams};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("query attack needs at least 100 trials, got {0}")]
    TooFewTrials(usize),
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("token {0:?} is not in the mapping vocabulary")]
    UnknownSurface(String),
    #[error("corpora are misaligned at record {record}: {reason}")]
    Misaligned { record: usize, reason: String },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryAttackConfig {
    pub trials: usize,
    pub confidence: f64,
    /// Upper limit of the search; results at the limit are censored.
    pub max_queries: u64,
    pub seed: u64,
}

impl Default for QueryAttackConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            confidence: 0.95,
            max_queries: 1 << 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryAttackResult {
    pub token: TokenId,
    /// Smallest query count reaching the confidence level.
    pub n: u64,
    pub trials: usize,
    pub epsilon: f64,
    /// Estimated success probability at `n`.
    pub success: f64,
    /// The token is alone in its group, so one query reveals it.
    pub no_protection: bool,
    /// The confidence level was not reached within `max_queries`.
    pub censored: bool,
}

/// Draws multinomial counts for `n` queries via conditional binomials.
fn multinomial_counts<R: Rng + ?Sized>(p: &[f64], n: u64, rng: &mut R, counts: &mut [u64]) {
    counts.fill(0);
    let mut remaining = n;
    let mut mass = 1.0;
    let last = p.len() - 1;
    for i in 0..last {
        if remaining == 0 {
            return;
        }
        let q = if mass > 0.0 { (p[i] / mass).clamp(0.0, 1.0) } else { 1.0 };
        let c = Binomial::new(remaining, q).expect("probability in [0, 1]").sample(rng);
        counts[i] = c;
        remaining -= c;
        mass -= p[i];
    }
    counts[last] = remaining;
}

/// Monte-Carlo estimate of `P(unique modal output = target)` after `n`
/// queries. Ties count as failures.
pub fn estimate_query_success(
    p: &[f64],
    target: usize,
    n: u64,
    trials: usize,
    stream: &RandomStream,
    key: u64,
) -> f64 {
    let mut counts = vec![0u64; p.len()];
    let mut wins = 0usize;
    for t in 0..trials {
        let mut rng = stream.substream(Domain::QueryAttack, key, (n << 24) ^ t as u64);
        multinomial_counts(p, n, &mut rng, &mut counts);
        let own = counts[target];
        if counts.iter().enumerate().all(|(i, &c)| i == target || c < own) {
            wins += 1;
        }
    }
    wins as f64 / trials as f64
}

/// Finds `N` for token `x`. The search runs over odd query counts
/// `n = 2m + 1`: doubling `m` until the estimate reaches the confidence, then
/// bisecting.
pub fn query_attack(
    mapping: &MappingTable,
    x: TokenId,
    params: SamplerParams,
    config: &QueryAttackConfig,
) -> Result<QueryAttackResult, AttackError> {
    if config.trials < 100 {
        return Err(AttackError::TooFewTrials(config.trials));
    }
    if !(config.confidence > 0.0 && config.confidence < 1.0) {
        return Err(AttackError::InvalidConfidence(config.confidence));
    }
    let a = mapping.assignment(x).ok_or(SamplerError::UnknownToken(x))?;
    let mut result = QueryAttackResult {
        token: x,
        n: 1,
        trials: config.trials,
        epsilon: params.epsilon(),
        success: 1.0,
        no_protection: false,
        censored: false,
    };
    if a.group.len() == 1 {
        result.no_protection = true;
        return Ok(result);
    }
    let p = em_probabilities(a.row(), params);
    let stream = RandomStream::new(config.seed);
    let key = (u64::from(x.0) << 32) ^ params.epsilon().to_bits().rotate_left(17);
    let success = |m: u64| estimate_query_success(&p, a.position, 2 * m + 1, config.trials, &stream, key);

    let max_m = config.max_queries.saturating_sub(1) / 2;
    let first = success(0);
    if first >= config.confidence {
        result.success = first;
        return Ok(result);
    }
    let (mut lo, mut hi) = (0u64, 1u64);
    let mut hi_success;
    loop {
        let m = hi.min(max_m);
        hi_success = success(m);
        if hi_success >= config.confidence {
            hi = m;
            break;
        }
        if m == max_m {
            result.n = 2 * max_m + 1;
            result.success = hi_success;
            result.censored = true;
            return Ok(result);
        }
        lo = m;
        hi = m.saturating_mul(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let s = success(mid);
        if s >= config.confidence {
            hi = mid;
            hi_success = s;
        } else {
            lo = mid;
        }
    }
    result.n = 2 * hi + 1;
    result.success = hi_success;
    Ok(result)
}

/// Bayes adversary with a uniform prior over each group's inputs.
#[derive(Debug, Clone)]
pub struct InversionAdversary {
    guess: Vec<TokenId>,
    group_of: Vec<u32>,
}

impl InversionAdversary {
    pub fn new(mapping: &MappingTable, params: SamplerParams) -> Self {
        let n = mapping.vocab().len();
        let mut guess = vec![TokenId(0); n];
        let mut group_of = vec![0u32; n];
        for (g, group) in mapping.groups().iter().enumerate() {
            let matrix: Vec<Vec<f64>> = (0..group.len()).map(|i| em_probabilities(group.row(i), params)).collect();
            let members = group.members();
            for (y, &out) in members.iter().enumerate() {
                let best = (0..members.len())
                    .max_by(|&a, &b| {
                        matrix[a][y]
                            .total_cmp(&matrix[b][y])
                            .then(members[b].cmp(&members[a]))
                    })
                    .expect("group is nonempty");
                guess[out.index()] = members[best];
                group_of[out.index()] = g as u32;
            }
        }
        Self { guess, group_of }
    }

    /// Most likely input given output `y`; ties go to the smallest token id.
    pub fn guess(&self, y: TokenId) -> TokenId {
        self.guess[y.index()]
    }

    pub fn same_group(&self, x: TokenId, y: TokenId) -> bool {
        self.group_of[x.index()] == self.group_of[y.index()]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InversionAttackResult {
    pub success_rate: f64,
    pub tokens_evaluated: u64,
    /// Pairs whose output could not come from the input's group.
    pub skipped: u64,
}

impl InversionAttackResult {
    pub fn privacy_level(&self) -> f64 {
        1.0 - self.success_rate
    }
}

/// Runs the inversion attack over `(true input, observed output)` pairs.
pub fn inversion_attack<I>(mapping: &MappingTable, params: SamplerParams, pairs: I) -> InversionAttackResult
where
    I: IntoIterator<Item = (TokenId, TokenId)>,
{
    let adversary = InversionAdversary::new(mapping, params);
    let mut result = InversionAttackResult::default();
    let mut hits = 0u64;
    for (x, y) in pairs {
        if !adversary.same_group(x, y) {
            result.skipped += 1;
            continue;
        }
        result.tokens_evaluated += 1;
        if adversary.guess(y) == x {
            hits += 1;
        }
    }
    if result.tokens_evaluated > 0 {
        result.success_rate = hits as f64 / result.tokens_evaluated as f64;
    }
    result
}

/// Exact inversion success with every vocabulary token equally likely as
/// input: `(1/|V|) Σ_groups Σ_y max_x Pr[y|x]`.
pub fn analytic_inversion_success(mapping: &MappingTable, params: SamplerParams) -> f64 {
    let mut total = 0.0;
    for group in mapping.groups() {
        let matrix: Vec<Vec<f64>> = (0..group.len()).map(|i| em_probabilities(group.row(i), params)).collect();
        for y in 0..group.len() {
            total += matrix.iter().map(|row| row[y]).fold(0.0, f64::max);
        }
    }
    total / mapping.vocab().len() as f64
}

/// Aligns original and sanitized token sequences and resolves in-vocabulary
/// pairs. Stopword positions are excluded.
pub fn aligned_pairs(
    mapping: &MappingTable,
    original: &[Vec<String>],
    sanitized: &[Vec<String>],
    stopwords: &HashSet<String>,
) -> Result<Vec<(TokenId, TokenId)>, AttackError> {
    check_alignment(original, sanitized)?;
    let mut pairs = Vec::new();
    for (o, s) in original.iter().zip(sanitized) {
        for (a, b) in o.iter().zip(s) {
            if stopwords.contains(a) {
                continue;
            }
            if let (Some(x), Some(y)) = (mapping.token(a), mapping.token(b)) {
                pairs.push((x, y));
            }
        }
    }
    Ok(pairs)
}

fn check_alignment(original: &[Vec<String>], sanitized: &[Vec<String>]) -> Result<(), AttackError> {
    if original.len() != sanitized.len() {
        return Err(AttackError::Misaligned {
            record: original.len().min(sanitized.len()),
            reason: format!("{} original records vs {} sanitized", original.len(), sanitized.len()),
        });
    }
    for (i, (o, s)) in original.iter().zip(sanitized).enumerate() {
        if o.len() != s.len() {
            return Err(AttackError::Misaligned {
                record: i,
                reason: format!("{} original tokens vs {} sanitized", o.len(), s.len()),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct UtilityMetrics {
    /// In-vocabulary, non-stopword input tokens.
    pub in_vocab_tokens: u64,
    /// Fraction of those whose output equals the input.
    pub retention_rate: f64,
    /// Mean cosine between input and output vectors over those tokens whose
    /// input and output vectors are both nonzero; `None` when no pair qualifies.
    pub mean_cosine: Option<f64>,
    pub stopword_tokens: u64,
    /// Fraction of stopword occurrences left unchanged; `None` without
    /// stopwords.
    pub stopword_passthrough_rate: Option<f64>,
}

/// Compares aligned corpora token by token.
pub fn utility_proxy(
    original: &[Vec<String>],
    sanitized: &[Vec<String>],
    table: &EmbeddingTable,
    stopwords: &HashSet<String>,
) -> Result<UtilityMetrics, AttackError> {
    check_alignment(original, sanitized)?;
    let mut m = UtilityMetrics::default();
    let (mut retained, mut cos_sum, mut cos_n, mut stop_kept) = (0u64, 0.0, 0u64, 0u64);
    for (o, s) in original.iter().zip(sanitized) {
        for (a, b) in o.iter().zip(s) {
            if stopwords.contains(a) {
                m.stopword_tokens += 1;
                if a == b {
                    stop_kept += 1;
                }
                continue;
            }
            let Some(x) = table.token(a) else { continue };
            m.in_vocab_tokens += 1;
            if a == b {
                retained += 1;
            }
            if let Some(y) = table.token(b).filter(|&y| table.norm(x) > 0.0 && table.norm(y) > 0.0) {
                cos_sum += table.distance(Measure::Cosine, x, y)?;
                cos_n += 1;
            }
        }
    }
    if m.in_vocab_tokens > 0 {
        m.retention_rate = retained as f64 / m.in_vocab_tokens as f64;
    }
    if cos_n > 0 {
        m.mean_cosine = Some(cos_sum / cos_n as f64);
    }
    if m.stopword_tokens > 0 {
        m.stopword_passthrough_rate = Some(stop_kept as f64 / m.stopword_tokens as f64);
    }
    Ok(m)
}
