//! Embedding ingestion, token interning and pairwise similarity.
//!
//! Embedding files use the GloVe text layout: one token per line, followed by
//! its vector components, separated by single spaces.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Dense index of a token in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("failed to read embeddings: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding file is empty")]
    Empty,
    #[error("dimension mismatch at line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("malformed line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("non-finite value at line {line}, component {component}")]
    NonFinite { line: usize, component: usize },
    #[error("token {surface:?} has a zero-norm vector; cosine similarity is undefined")]
    ZeroNorm { surface: String },
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("invalid token surface {0:?}")]
    InvalidSurface(String),
}

/// Interned vocabulary: ids are contiguous from 0 and bijective with surfaces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns `surface`, returning `None` if it is already present.
    pub fn insert(&mut self, surface: &str) -> Result<Option<TokenId>, EmbedError> {
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return Err(EmbedError::InvalidSurface(surface.to_owned()));
        }
        if self.index.contains_key(surface) {
            return Ok(None);
        }
        let id = TokenId(self.surfaces.len() as u32);
        self.surfaces.push(surface.to_owned());
        self.index.insert(surface.to_owned(), id);
        Ok(Some(id))
    }

    pub fn get(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.surfaces[id.index()]
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> {
        (0..self.surfaces.len() as u32).map(TokenId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Smaller raw values mean semantically closer.
    Negative,
    /// Larger raw values mean semantically closer.
    Positive,
}

/// Similarity measure over token vectors. The polarity is fixed by the kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Euclidean,
    Cosine,
}

impl Measure {
    pub fn polarity(self) -> Polarity {
        match self {
            Measure::Euclidean => Polarity::Negative,
            Measure::Cosine => Polarity::Positive,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Euclidean => "euclidean",
            Measure::Cosine => "cosine",
        }
    }

    /// Maps a raw measure value to a key where smaller means closer.
    #[inline]
    pub fn closeness_key(self, raw: f64) -> f64 {
        match self {
            Measure::Euclidean => raw,
            Measure::Cosine => -raw,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Measure::Euclidean),
            "cosine" | "cos" => Ok(Measure::Cosine),
            other => Err(format!("unknown measure {other:?} (expected euclidean or cosine)")),
        }
    }
}

/// SHA-256 over the vocabulary and its vectors.
pub type VocabHash = [u8; 32];

/// Immutable vocabulary plus one `dim`-dimensional vector per token.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vocab: Vocab,
    data: Vec<f64>,
    norms: Vec<f64>,
    duplicates: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(surface, vector)` rows, keeping the first
    /// occurrence of a duplicated surface.
    pub fn from_rows<S, I>(rows: I) -> Result<Self, EmbedError>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, Vec<f64>)>,
    {
        let mut builder = Builder::new(None);
        for (i, (surface, vector)) in rows.into_iter().enumerate() {
            builder.push(i + 1, surface.as_ref(), &vector)?;
        }
        builder.finish()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Number of lines dropped because their surface was already present.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn token(&self, surface: &str) -> Option<TokenId> {
        self.vocab.get(surface)
    }

    pub fn surface(&self, id: TokenId) -> &str {
        self.vocab.surface(id)
    }

    pub fn vector(&self, id: TokenId) -> &[f64] {
        let start = id.index() * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn norm(&self, id: TokenId) -> f64 {
        self.norms[id.index()]
    }

    fn check(&self, id: TokenId) -> Result<(), EmbedError> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(EmbedError::UnknownToken(id))
        }
    }

    /// Raw measure value between two tokens: L2 distance for euclidean,
    /// cosine similarity (clamped to [-1, 1], exactly 1 on the diagonal) for
    /// cosine.
    pub fn distance(&self, measure: Measure, x: TokenId, y: TokenId) -> Result<f64, EmbedError> {
        self.check(x)?;
        self.check(y)?;
        match measure {
            Measure::Euclidean => Ok(self.euclidean(x, y)),
            Measure::Cosine => {
                for id in [x, y] {
                    if self.norms[id.index()] == 0.0 {
                        return Err(EmbedError::ZeroNorm {
                            surface: self.surface(id).to_owned(),
                        });
                    }
                }
                Ok(self.cosine_unchecked(x, y))
            }
        }
    }

    #[inline]
    pub(crate) fn euclidean(&self, x: TokenId, y: TokenId) -> f64 {
        if x == y {
            return 0.0;
        }
        self.vector(x)
            .iter()
            .zip(self.vector(y))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    pub(crate) fn cosine_unchecked(&self, x: TokenId, y: TokenId) -> f64 {
        if x == y {
            return 1.0;
        }
        let dot: f64 = self.vector(x).iter().zip(self.vector(y)).map(|(a, b)| a * b).sum();
        (dot / (self.norms[x.index()] * self.norms[y.index()])).clamp(-1.0, 1.0)
    }

    /// Fails if any vector has zero norm, naming the first offender.
    pub fn require_nonzero_norms(&self) -> Result<(), EmbedError> {
        match self.norms.iter().position(|&n| n == 0.0) {
            Some(i) => Err(EmbedError::ZeroNorm {
                surface: self.surface(TokenId(i as u32)).to_owned(),
            }),
            None => Ok(()),
        }
    }

    /// Largest pairwise euclidean distance over the whole vocabulary.
    pub fn max_euclidean_distance(&self) -> f64 {
        let n = self.len() as u32;
        let row_max = |i: u32| {
            (i + 1..n)
                .map(|j| self.euclidean(TokenId(i), TokenId(j)))
                .fold(0.0f64, f64::max)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(row_max).reduce(|| 0.0, f64::max)
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n).map(row_max).fold(0.0, f64::max)
        }
    }

    /// Content hash binding a mapping artifact to the table it was built from.
    pub fn fingerprint(&self) -> VocabHash {
        let mut hasher = Sha256::new();
        hasher.update(b"custext-vocab-v1");
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update((self.len() as u64).to_le_bytes());
        for id in self.vocab.ids() {
            let surface = self.surface(id).as_bytes();
            hasher.update((surface.len() as u64).to_le_bytes());
            hasher.update(surface);
            for v in self.vector(id) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hasher.finalize().into()
    }
}

struct Builder {
    dim: Option<usize>,
    vocab: Vocab,
    data: Vec<f64>,
    duplicates: usize,
}

impl Builder {
    fn new(expected_dim: Option<usize>) -> Self {
        Self {
            dim: expected_dim,
            vocab: Vocab::new(),
            data: Vec::new(),
            duplicates: 0,
        }
    }

    fn push(&mut self, line: usize, surface: &str, vector: &[f64]) -> Result<(), EmbedError> {
        if vector.is_empty() {
            return Err(EmbedError::Malformed {
                line,
                reason: "token has no vector components".into(),
            });
        }
        let dim = *self.dim.get_or_insert(vector.len());
        if vector.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                line,
                expected: dim,
                found: vector.len(),
            });
        }
        if let Some(component) = vector.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { line, component });
        }
        match self.vocab.insert(surface) {
            Ok(Some(_)) => self.data.extend_from_slice(vector),
            Ok(None) => self.duplicates += 1,
            Err(_) => {
                return Err(EmbedError::Malformed {
                    line,
                    reason: format!("invalid token surface {surface:?}"),
                })
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingTable, EmbedError> {
        let Some(dim) = self.dim.filter(|_| !self.vocab.is_empty()) else {
            return Err(EmbedError::Empty);
        };
        let norms = self
            .data
            .chunks_exact(dim)
            .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        if self.duplicates > 0 {
            log::warn!("dropped {} duplicate embedding lines", self.duplicates);
        }
        Ok(EmbeddingTable {
            dim,
            vocab: self.vocab,
            data: self.data,
            norms,
            duplicates: self.duplicates,
        })
    }
}

fn parse_line(line_no: usize, line: &str) -> Result<(&str, Vec<f64>), EmbedError> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = line.split(' ');
    let surface = match fields.next() {
        Some(s) if !s.is_empty() => s,
        _ => {
            return Err(EmbedError::Malformed {
                line: line_no,
                reason: "missing token surface".into(),
            })
        }
    };
    let vector = fields
        .enumerate()
        .map(|(i, field)| {
            field.parse::<f64>().map_err(|_| EmbedError::Malformed {
                line: line_no,
                reason: format!("component {i} is not a number: {field:?}"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((surface, vector))
}

/// Parses embeddings from any reader. Ids follow line order.
pub fn read_embeddings<R: Read>(reader: R, expected_dim: Option<usize>) -> Result<EmbeddingTable, EmbedError> {
    let mut builder = Builder::new(expected_dim);
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let (surface, vector) = parse_line(i + 1, &line)?;
        builder.push(i + 1, surface, &vector)?;
    }
    builder.finish()
}

pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingTable, EmbedError> {
    read_embeddings(File::open(path)?, expected_dim)
}
