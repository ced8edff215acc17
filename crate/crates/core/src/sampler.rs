//! Exponential-mechanism sampling over a group's score row, the
//! full-vocabulary metric-DP baseline, and exact ratio verification.

use std::io::Write;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingTable, Measure, TokenId};
use crate::mapping::MappingTable;

/// Sensitivity bound of the normalized score function.
pub const DELTA_U: f64 = 1.0;

/// Relative slack allowed when comparing an exact ratio to `e^ε`.
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("epsilon must be a positive finite number, got {0}")]
    InvalidEpsilon(f64),
    #[error("MLDP baseline requires a metric distance; {0} is not a metric")]
    NonMetric(Measure),
    #[error("token {0} is not in the mapping vocabulary")]
    UnknownToken(TokenId),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerParams {
    epsilon: f64,
}

impl SamplerParams {
    pub fn new(epsilon: f64) -> Result<Self, SamplerError> {
        if epsilon > 0.0 && epsilon.is_finite() {
            Ok(Self { epsilon })
        } else {
            Err(SamplerError::InvalidEpsilon(epsilon))
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta_u(&self) -> f64 {
        DELTA_U
    }

    /// The ε-DP ratio bound `e^ε`.
    pub fn bound(&self) -> f64 {
        self.epsilon.exp()
    }
}

/// Normalized `exp(logit)` with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// `p_i ∝ exp(ε·u_i / 2Δu)` over one score row.
pub fn em_probabilities(scores: &[f64], params: SamplerParams) -> Vec<f64> {
    let scale = params.epsilon / (2.0 * DELTA_U);
    let logits: Vec<f64> = scores.iter().map(|&u| scale * u).collect();
    softmax(&logits)
}

/// Inverse-CDF draw of an index from a normalized probability vector.
pub fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // u landed in the rounding gap above the final cumulative sum.
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(probabilities.len() - 1)
}

/// Exact output distribution for input `x`: its group members and their
/// probabilities.
pub fn output_distribution(
    mapping: &MappingTable,
    x: TokenId,
    params: SamplerParams,
) -> Result<(&[TokenId], Vec<f64>), SamplerError> {
    let a = mapping.assignment(x).ok_or(SamplerError::UnknownToken(x))?;
    Ok((a.group.members(), em_probabilities(a.row(), params)))
}

/// Replaces `x` with a member of its group drawn by the exponential mechanism.
pub fn em_sample<R: Rng + ?Sized>(
    mapping: &MappingTable,
    x: TokenId,
    params: SamplerParams,
    rng: &mut R,
) -> Result<TokenId, SamplerError> {
    let a = mapping.assignment(x).ok_or(SamplerError::UnknownToken(x))?;
    if a.group.len() == 1 {
        return Ok(x);
    }
    let p = em_probabilities(a.row(), params);
    Ok(a.group.members()[sample_index(&p, rng)])
}

/// Metric-DP baseline over the whole vocabulary:
/// `p(y) ∝ exp(-ε'·d(x, y) / 2)` with euclidean `d`.
pub fn baseline_probabilities(
    table: &EmbeddingTable,
    measure: Measure,
    x: TokenId,
    eps_prime: f64,
) -> Result<Vec<f64>, SamplerError> {
    if measure != Measure::Euclidean {
        return Err(SamplerError::NonMetric(measure));
    }
    if !(eps_prime > 0.0 && eps_prime.is_finite()) {
        return Err(SamplerError::InvalidEpsilon(eps_prime));
    }
    let logits = table
        .vocab()
        .ids()
        .map(|y| table.distance(measure, x, y).map(|d| -eps_prime * d / 2.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(softmax(&logits))
}

pub fn baseline_mldp_sample<R: Rng + ?Sized>(
    table: &EmbeddingTable,
    measure: Measure,
    x: TokenId,
    eps_prime: f64,
    rng: &mut R,
) -> Result<TokenId, SamplerError> {
    let p = baseline_probabilities(table, measure, x, eps_prime)?;
    Ok(TokenId(sample_index(&p, rng) as u32))
}

/// ε-DP level of an ε'-metric-DP mechanism whose inputs are at most `d_max`
/// apart.
pub fn mldp_to_dp_epsilon(eps_prime: f64, d_max: f64) -> f64 {
    eps_prime * d_max
}

/// Metric-DP parameter giving the ε-DP level `epsilon` over diameter `d_max`.
pub fn dp_to_mldp_epsilon(epsilon: f64, d_max: f64) -> f64 {
    epsilon / d_max
}

/// Worst `Pr[y|x] / Pr[y|x']` found in one group.
#[derive(Debug, Clone, Serialize)]
pub struct GroupRatio {
    pub group: usize,
    pub input: TokenId,
    pub other: TokenId,
    pub output: TokenId,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DpReport {
    pub epsilon: f64,
    pub bound: f64,
    pub groups: Vec<GroupRatio>,
}

impl DpReport {
    pub fn worst(&self) -> Option<&GroupRatio> {
        self.groups.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio))
    }

    pub fn worst_ratio(&self) -> f64 {
        self.worst().map_or(1.0, |w| w.ratio)
    }

    pub fn holds(&self) -> bool {
        self.worst_ratio() <= self.bound * (1.0 + RATIO_TOLERANCE)
    }

    /// CSV with columns `group,input,other,output,ratio,bound`.
    pub fn write_csv<W: Write>(&self, mapping: &MappingTable, mut out: W) -> std::io::Result<()> {
        writeln!(out, "group,input,other,output,ratio,bound")?;
        for g in &self.groups {
            writeln!(
                out,
                "{},{},{},{},{:.12},{:.12}",
                g.group,
                csv_field(mapping.surface(g.input)),
                csv_field(mapping.surface(g.other)),
                csv_field(mapping.surface(g.output)),
                g.ratio,
                self.bound
            )?;
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// For each output column, the largest ratio between two rows of a
/// row-stochastic matrix is `max_x p(y|x) / min_x p(y|x)`.
#[allow(clippy::needless_range_loop)]
pub(crate) fn worst_column_ratio(matrix: &[Vec<f64>]) -> (usize, usize, usize, f64) {
    let n = matrix.len();
    let mut worst = (0, 0, 0, 1.0);
    for y in 0..matrix.first().map_or(0, Vec::len) {
        let (mut hi, mut lo) = (0, 0);
        for x in 1..n {
            if matrix[x][y] > matrix[hi][y] {
                hi = x;
            }
            if matrix[x][y] < matrix[lo][y] {
                lo = x;
            }
        }
        let ratio = matrix[hi][y] / matrix[lo][y];
        if ratio > worst.3 {
            worst = (hi, lo, y, ratio);
        }
    }
    worst
}

/// Computes every group's exact worst-case probability ratio.
pub fn dp_ratio_check(mapping: &MappingTable, params: SamplerParams) -> DpReport {
    let check = |(i, group): (usize, &crate::mapping::Group)| {
        let matrix: Vec<Vec<f64>> = (0..group.len()).map(|p| em_probabilities(group.row(p), params)).collect();
        let (x, x2, y, ratio) = worst_column_ratio(&matrix);
        let m = group.members();
        GroupRatio {
            group: i,
            input: m[x],
            other: m[x2],
            output: m[y],
            ratio,
        }
    };
    #[cfg(feature = "parallel")]
    let groups = {
        use rayon::prelude::*;
        mapping.groups().par_iter().enumerate().map(check).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let groups = mapping.groups().iter().enumerate().map(check).collect();
    DpReport {
        epsilon: params.epsilon,
        bound: params.bound(),
        groups,
    }
}

/// Exact worst ratio of the baseline over the full vocabulary, with the ε-DP
/// level obtained by rescaling `eps_prime` with the vocabulary diameter.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineDpReport {
    pub eps_prime: f64,
    pub d_max: f64,
    pub epsilon: f64,
    pub worst_ratio: f64,
}

impl BaselineDpReport {
    pub fn holds(&self) -> bool {
        self.worst_ratio <= self.epsilon.exp() * (1.0 + RATIO_TOLERANCE)
    }
}

pub fn baseline_ratio_check(table: &EmbeddingTable, eps_prime: f64) -> Result<BaselineDpReport, SamplerError> {
    let matrix = table
        .vocab()
        .ids()
        .map(|x| baseline_probabilities(table, Measure::Euclidean, x, eps_prime))
        .collect::<Result<Vec<_>, _>>()?;
    let (.., worst_ratio) = worst_column_ratio(&matrix);
    let d_max = table.max_euclidean_distance();
    Ok(BaselineDpReport {
        eps_prime,
        d_max,
        epsilon: mldp_to_dp_epsilon(eps_prime, d_max),
        worst_ratio,
    })
}
