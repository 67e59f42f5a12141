//! Named, splittable random streams.
//!
//! A [`SeedStream`] is a 64-bit key. Splitting by a label hashes the parent
//! key together with the label, so streams for different purposes never
//! share state and adding a new consumer does not shift existing ones.
//! Each stream materializes as a ChaCha8 generator, which is counter-based.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(seed)
    }

    pub fn key(&self) -> u64 {
        self.0
    }

    pub fn split(&self, label: &str) -> SeedStream {
        let mut hasher = Sha256::new();
        hasher.update(self.0.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        SeedStream(u64::from_le_bytes(word))
    }

    pub fn split_index(&self, label: &str, index: u64) -> SeedStream {
        self.split(&format!("{label}/{index}"))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
