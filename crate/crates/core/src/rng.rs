//! Seed derivation.
//!
//! All randomness in a run descends from one top-level `u64` seed. A child
//! stream is identified by a path of integer tags (replicate index, purpose
//! tag, subsample index, ...) and its seed is obtained by folding the tags
//! through SplitMix64. Streams therefore never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for the second level of the derivation path.
pub mod tag {
    pub const TOPOLOGY: u64 = 1;
    pub const PRECISION: u64 = 2;
    pub const SAMPLES: u64 = 3;
    pub const AMSE: u64 = 10;
    pub const STARS: u64 = 11;
    pub const SUBSET: u64 = 12;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(base: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_distinct() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
        let a: u64 = stream(3, &[0]).random();
        let b: u64 = stream(3, &[0]).random();
        assert_eq!(a, b);
    }
}
