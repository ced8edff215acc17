//! Position-keyed random substreams.
//!
//! Every random draw in the pipeline comes from a generator derived from the
//! master seed and a position, never from shared mutable state. Identical
//! `(seed, domain, a, b)` always yields identical draws, regardless of the
//! order or thread the work runs on.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator handed out for a single position.
pub type SubstreamRng = ChaCha12Rng;

/// Separates substreams used for unrelated purposes under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Sanitize = 1,
    QueryAttack = 2,
    Synthetic = 3,
    Sampling = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    master_seed: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Substream for token `token` of record `record` during sanitization.
    pub fn position(&self, record: u64, token: u64) -> SubstreamRng {
        self.substream(Domain::Sanitize, record, token)
    }

    pub fn substream(&self, domain: Domain, a: u64, b: u64) -> SubstreamRng {
        let mut state = self.master_seed;
        let mut seed = [0u8; 32];
        let words = [domain as u64, a, b, 0x6375_7374_6578_7431];
        for (chunk, word) in seed.chunks_exact_mut(8).zip(words) {
            state ^= word;
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
