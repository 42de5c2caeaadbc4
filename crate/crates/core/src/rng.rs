//! Seed derivation. Every random stream in a run is derived from the single
//! run seed plus a path of labels/indices, so runs replay bit-identically and
//! parallel workers never share generator state.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Deterministic hierarchical RNG root.
#[derive(Debug, Clone, Copy)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree { seed }
    }

    /// Derive a child seed from a label and an index path.
    pub fn derive(&self, label: &str, path: &[u64]) -> u64 {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for &b in label.as_bytes() {
            h = splitmix64(h ^ b as u64);
        }
        for &p in path {
            h = splitmix64(h ^ p);
        }
        h
    }

    /// ChaCha stream for a label/path; independent of all other streams.
    pub fn rng(&self, label: &str, path: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(label, path))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
