//! Token mapping generation: partitions the vocabulary into output groups of
//! `K` semantically close tokens and builds each group's normalized score
//! matrix.
//!
//! Tokens inside one group are adjacent to each other: each one's output set
//! is the whole group, and the sampler makes them indistinguishable.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingTable, Measure, Polarity, TokenId, Vocab, VocabHash};

/// Candidate block size for the nearest-neighbour scan.
const SCAN_BLOCK: usize = 2048;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("K must be at least 1")]
    ZeroK,
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("invalid mapping: {0}")]
    Invalid(String),
    #[error("frequency file line {line}: {reason}")]
    Frequency { line: usize, reason: String },
    #[error("failed to read frequency file: {0}")]
    Io(#[from] std::io::Error),
}

/// How the next seed token is picked from the unmapped pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    VocabOrder,
    FrequencyOrder,
}

impl SeedPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SeedPolicy::VocabOrder => "vocab_order",
            SeedPolicy::FrequencyOrder => "frequency_order",
        }
    }
}

/// Concrete seed order: a permutation of the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedOrder {
    Vocab,
    Frequency(Vec<TokenId>),
}

impl SeedOrder {
    pub fn policy(&self) -> SeedPolicy {
        match self {
            SeedOrder::Vocab => SeedPolicy::VocabOrder,
            SeedOrder::Frequency(_) => SeedPolicy::FrequencyOrder,
        }
    }

    /// Descending corpus frequency; ties and tokens without a count fall back
    /// to vocabulary order.
    pub fn from_frequencies(vocab: &Vocab, counts: &HashMap<String, u64>) -> Self {
        let mut ids: Vec<TokenId> = vocab.ids().collect();
        ids.sort_by_key(|&id| (std::cmp::Reverse(counts.get(vocab.surface(id)).copied().unwrap_or(0)), id));
        SeedOrder::Frequency(ids)
    }

    fn sequence(&self, n: usize) -> Vec<TokenId> {
        match self {
            SeedOrder::Vocab => (0..n as u32).map(TokenId).collect(),
            SeedOrder::Frequency(ids) => ids.clone(),
        }
    }
}

/// Reads a frequency side file: `surface count` per line (space or tab).
pub fn read_frequencies<R: Read>(reader: R) -> Result<HashMap<String, u64>, MappingError> {
    let mut counts = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let (Some(surface), Some(count), None) = (fields.next(), fields.next(), fields.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(MappingError::Frequency {
                line: i + 1,
                reason: "expected `token count`".into(),
            });
        };
        let count = count.parse::<u64>().map_err(|_| MappingError::Frequency {
            line: i + 1,
            reason: format!("count {count:?} is not a non-negative integer"),
        })?;
        *counts.entry(surface.to_owned()).or_insert(0) += count;
    }
    Ok(counts)
}

/// One output set together with its score function `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    members: Vec<TokenId>,
    scores: Vec<f64>,
    d_min: f64,
    d_max: f64,
}

impl Group {
    pub fn members(&self) -> &[TokenId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Score row of the member at `position`: `u(x, y)` for every member `y`.
    pub fn row(&self, position: usize) -> &[f64] {
        let k = self.members.len();
        &self.scores[position * k..(position + 1) * k]
    }

    pub fn score(&self, x: usize, y: usize) -> f64 {
        self.scores[x * self.members.len() + y]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn position(&self, token: TokenId) -> Option<usize> {
        self.members.iter().position(|&m| m == token)
    }

    pub(crate) fn from_parts(members: Vec<TokenId>, scores: Vec<f64>, d_min: f64, d_max: f64) -> Self {
        Self {
            members,
            scores,
            d_min,
            d_max,
        }
    }
}

/// Normalized score matrix of one group, row-major over members × members.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScores {
    pub scores: Vec<f64>,
    pub d_min: f64,
    pub d_max: f64,
}

/// Min-max normalizes all pairwise raw values of `members`. Negative
/// polarity yields scores in `[-1, 0]`, positive polarity in `[0, 1]`; a
/// group with constant raw values gets all-zero scores.
pub fn build_scores(members: &[TokenId], table: &EmbeddingTable, measure: Measure) -> Result<GroupScores, EmbedError> {
    let k = members.len();
    let mut raw = Vec::with_capacity(k * k);
    for &x in members {
        for &y in members {
            raw.push(table.distance(measure, x, y)?);
        }
    }
    let d_min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = d_max - d_min;
    let scores = if span > 0.0 {
        raw.iter()
            .map(|&d| {
                let normalized = ((d - d_min) / span).clamp(0.0, 1.0);
                match measure.polarity() {
                    // `0.0 - x` keeps the self score at +0.0 rather than -0.0.
                    Polarity::Negative => 0.0 - normalized,
                    Polarity::Positive => normalized,
                }
            })
            .collect()
    } else {
        vec![0.0; k * k]
    };
    Ok(GroupScores { scores, d_min, d_max })
}

/// Where a token lives in the mapping.
#[derive(Debug, Clone, Copy)]
pub struct Assignment<'a> {
    pub token: TokenId,
    pub group_index: usize,
    pub group: &'a Group,
    pub position: usize,
}

impl<'a> Assignment<'a> {
    pub fn row(&self) -> &'a [f64] {
        self.group.row(self.position)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Lookup<'a> {
    InVocab(Assignment<'a>),
    Oov,
}

/// The mapping function plus the score function of every group.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingTable {
    k: usize,
    measure: Measure,
    seed_policy: SeedPolicy,
    vocab_hash: VocabHash,
    dim: usize,
    vocab: Vocab,
    groups: Vec<Group>,
    token_to_group: Vec<(u32, u32)>,
}

impl MappingTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn seed_policy(&self) -> SeedPolicy {
        self.seed_policy
    }

    pub fn vocab_hash(&self) -> &VocabHash {
        &self.vocab_hash
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, index: usize) -> &Group {
        &self.groups[index]
    }

    pub fn assignment(&self, token: TokenId) -> Option<Assignment<'_>> {
        let &(g, p) = self.token_to_group.get(token.index())?;
        Some(Assignment {
            token,
            group_index: g as usize,
            group: &self.groups[g as usize],
            position: p as usize,
        })
    }

    pub fn token(&self, surface: &str) -> Option<TokenId> {
        self.vocab.get(surface)
    }

    pub fn surface(&self, token: TokenId) -> &str {
        self.vocab.surface(token)
    }

    /// Resolves a surface to its group and score row.
    pub fn lookup(&self, surface: &str) -> Lookup<'_> {
        match self.token(surface).and_then(|t| self.assignment(t)) {
            Some(a) => Lookup::InVocab(a),
            None => Lookup::Oov,
        }
    }

    /// True when some token has no adjacent token, so its output is
    /// deterministic.
    pub fn has_singletons(&self) -> bool {
        self.groups.iter().any(|g| g.len() == 1)
    }

    /// Assembles a mapping from stored parts, checking every structural
    /// invariant.
    pub(crate) fn from_parts(
        k: usize,
        measure: Measure,
        seed_policy: SeedPolicy,
        vocab_hash: VocabHash,
        dim: usize,
        vocab: Vocab,
        groups: Vec<Group>,
    ) -> Result<Self, MappingError> {
        let invalid = |m: String| Err(MappingError::Invalid(m));
        if k == 0 {
            return Err(MappingError::ZeroK);
        }
        if vocab.is_empty() {
            return Err(MappingError::EmptyVocab);
        }
        let n = vocab.len();
        let mut token_to_group = vec![(u32::MAX, u32::MAX); n];
        let mut short = 0;
        for (g, group) in groups.iter().enumerate() {
            let size = group.len();
            if size == 0 {
                return invalid(format!("group {g} is empty"));
            }
            if size != k {
                short += 1;
                if size > k {
                    return invalid(format!("group {g} has {size} members, more than K={k}"));
                }
            }
            if group.scores.len() != size * size {
                return invalid(format!("group {g} score matrix has wrong shape"));
            }
            let (lo, hi) = match measure.polarity() {
                Polarity::Negative => (-1.0, 0.0),
                Polarity::Positive => (0.0, 1.0),
            };
            if group.scores.iter().any(|s| !(lo..=hi).contains(s)) {
                return invalid(format!("group {g} has scores outside [{lo}, {hi}]"));
            }
            for (p, &m) in group.members.iter().enumerate() {
                let Some(slot) = token_to_group.get_mut(m.index()) else {
                    return invalid(format!("group {g} references unknown token {m}"));
                };
                if slot.0 != u32::MAX {
                    return invalid(format!("token {m} appears in more than one group"));
                }
                *slot = (g as u32, p as u32);
            }
        }
        if short > 1 {
            return invalid(format!("{short} groups are smaller than K={k}"));
        }
        if let Some(t) = token_to_group.iter().position(|s| s.0 == u32::MAX) {
            return invalid(format!("token #{t} is not assigned to any group"));
        }
        Ok(Self {
            k,
            measure,
            seed_policy,
            vocab_hash,
            dim,
            vocab,
            groups,
            token_to_group,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    key: f64,
    token: TokenId,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then(self.token.cmp(&other.token))
    }
}

/// Bounded max-heap keeping the `m` smallest candidates.
fn push_bounded(heap: &mut BinaryHeap<Candidate>, m: usize, c: Candidate) {
    if heap.len() < m {
        heap.push(c);
    } else if let Some(top) = heap.peek() {
        if c < *top {
            heap.pop();
            heap.push(c);
        }
    }
}

fn scan_block(table: &EmbeddingTable, measure: Measure, seed: TokenId, block: &[TokenId], m: usize) -> BinaryHeap<Candidate> {
    let mut heap = BinaryHeap::with_capacity(m + 1);
    for &y in block {
        let raw = match measure {
            Measure::Euclidean => table.euclidean(seed, y),
            Measure::Cosine => table.cosine_unchecked(seed, y),
        };
        push_bounded(&mut heap, m, Candidate { key: measure.closeness_key(raw), token: y });
    }
    heap
}

fn merge(mut a: BinaryHeap<Candidate>, b: BinaryHeap<Candidate>, m: usize) -> BinaryHeap<Candidate> {
    for c in b {
        push_bounded(&mut a, m, c);
    }
    a
}

/// The `m` candidates closest to `seed`, ordered closest first; ties are
/// broken by ascending token id. Independent of how the scan is sharded.
pub fn closest_tokens(
    table: &EmbeddingTable,
    measure: Measure,
    seed: TokenId,
    candidates: &[TokenId],
    m: usize,
) -> Vec<TokenId> {
    if m == 0 {
        return Vec::new();
    }
    #[cfg(feature = "parallel")]
    let heap = {
        use rayon::prelude::*;
        candidates
            .par_chunks(SCAN_BLOCK)
            .map(|block| scan_block(table, measure, seed, block, m))
            .reduce(BinaryHeap::new, |a, b| merge(a, b, m))
    };
    #[cfg(not(feature = "parallel"))]
    let heap = candidates
        .chunks(SCAN_BLOCK)
        .map(|block| scan_block(table, measure, seed, block, m))
        .fold(BinaryHeap::new(), |a, b| merge(a, b, m));
    heap.into_sorted_vec().into_iter().map(|c| c.token).collect()
}

/// Greedy partition of the vocabulary into groups of `k` closest tokens.
///
/// Each round takes the next unmapped token under `order`, adds its `k - 1`
/// closest unmapped tokens, and removes the group from the pool. Once fewer
/// than `k` tokens remain they form one final, smaller group.
pub fn generate_mapping(
    table: &EmbeddingTable,
    k: usize,
    measure: Measure,
    order: &SeedOrder,
) -> Result<MappingTable, MappingError> {
    if k == 0 {
        return Err(MappingError::ZeroK);
    }
    let n = table.len();
    if n == 0 {
        return Err(MappingError::EmptyVocab);
    }
    if let SeedOrder::Frequency(ids) = order {
        let mut seen = vec![false; n];
        for id in ids {
            if id.index() >= n || std::mem::replace(&mut seen[id.index()], true) {
                return Err(MappingError::Invalid("frequency order is not a permutation of the vocabulary".into()));
            }
        }
        if ids.len() != n {
            return Err(MappingError::Invalid("frequency order is not a permutation of the vocabulary".into()));
        }
    }
    if measure == Measure::Cosine {
        table.require_nonzero_norms()?;
    }
    if k == 1 {
        log::warn!("K = 1: every token maps only to itself; no token has an adjacent token and no indistinguishability is provided");
    } else if k > n {
        log::warn!("K = {k} exceeds the vocabulary size {n}; using a single group of the whole vocabulary");
    }

    let sequence = order.sequence(n);
    let mut mapped = vec![false; n];
    let mut pool: Vec<TokenId> = sequence.clone();
    let mut cursor = 0;
    let mut groups = Vec::with_capacity(n.div_ceil(k));

    while !pool.is_empty() {
        while mapped[sequence[cursor].index()] {
            cursor += 1;
        }
        let seed = sequence[cursor];
        let want = k.min(pool.len()) - 1;
        pool.retain(|&t| t != seed);
        let mut members = Vec::with_capacity(want + 1);
        members.push(seed);
        members.extend(closest_tokens(table, measure, seed, &pool, want));
        for &m in &members {
            mapped[m.index()] = true;
        }
        if want > 0 {
            pool.retain(|t| !mapped[t.index()]);
        }
        let GroupScores { scores, d_min, d_max } = build_scores(&members, table, measure)?;
        groups.push(Group {
            members,
            scores,
            d_min,
            d_max,
        });
    }

    MappingTable::from_parts(
        k,
        measure,
        order.policy(),
        table.fingerprint(),
        table.dim(),
        table.vocab().clone(),
        groups,
    )
}
