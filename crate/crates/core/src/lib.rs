//! Text sanitization under ε-differential privacy with customized output
//! sets.
//!
//! The vocabulary of an embedding table is partitioned into groups of `K`
//! semantically close tokens ([`mapping`]). Each token is then replaced by a
//! member of its own group drawn with the exponential mechanism over
//! normalized similarity scores ([`sampler`]), so any two tokens in a group
//! are ε-indistinguishable. [`sanitizer`] applies this to documents, with an
//! optional stopword passthrough, and [`attacks`] measures what an adversary
//! can still recover.

pub mod artifact;
pub mod attacks;
pub mod corpus;
pub mod embed;
pub mod mapping;
pub mod rng;
pub mod sampler;
pub mod sanitizer;
pub mod sweep;
pub mod synth;

pub use embed::{load_embeddings, read_embeddings, EmbedError, EmbeddingTable, Measure, Polarity, TokenId, Vocab};
pub use mapping::{build_scores, generate_mapping, Group, Lookup, MappingError, MappingTable, SeedOrder, SeedPolicy};
pub use rng::RandomStream;
pub use sampler::{dp_ratio_check, em_probabilities, em_sample, DpReport, SamplerError, SamplerParams};
pub use sanitizer::{tokenize, Document, Mode, NumberPolicy, SanitizeConfig, SanitizeError, Sanitizer};
