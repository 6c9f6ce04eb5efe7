//! Deterministic seeding.
//!
//! One global seed fans out into named sub-streams. Each stream is keyed by
//! a SHA-256 digest of `(seed, name, index)`, so adding a new consumer never
//! shifts the draws seen by existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

pub const STREAM_INIT: &str = "init";
pub const STREAM_NOISE: &str = "noise";
pub const STREAM_SHUFFLE: &str = "shuffle";
pub const STREAM_SAMPLE: &str = "sample";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedTree {
    seed: u64,
}

pub fn seed_all(seed: u64) -> SeedTree {
    SeedTree { seed }
}

impl SeedTree {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        self.substream(name, 0)
    }

    /// Stream `name` at position `index` (e.g. a training step), independent
    /// of how many draws other indices consumed.
    pub fn substream(&self, name: &str, index: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update(index.to_le_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..]);
        ChaCha8Rng::from_seed(key)
    }
}

/// `n` standard-normal draws.
pub fn normal_vec(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
