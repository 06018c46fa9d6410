//! Seed splitting.
//!
//! Every random object in the crate is drawn from its own ChaCha20 stream
//! whose seed is `derive_seed(parent, stream_tag)`. The mixing function is the
//! SplitMix64 finalizer applied twice:
//!
//! ```text
//! derive_seed(s, t) = mix(mix(s) ^ (t * 0x9E3779B97F4A7C15))
//! mix(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!          z ^= z >> 27; z *= 0x94D049BB133111EB; z ^ (z >> 31)
//! ```
//!
//! (all arithmetic wrapping on `u64`). Because no global generator is
//! involved, work items can be evaluated in any order or in parallel and
//! still produce identical values.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream tags used by instance generation.
pub mod stream {
    pub const SPARSE_VECTOR: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const LEMMA_ORACLE: u64 = 3;
    /// Block `i` of a dictionary uses `BLOCK_BASE + i`.
    pub const BLOCK_BASE: u64 = 0x100;
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for `stream` from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(mix(seed) ^ stream.wrapping_mul(GOLDEN_GAMMA))
}

/// The generator used everywhere in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        let a = derive_seed(7, stream::SPARSE_VECTOR);
        let b = derive_seed(7, stream::NOISE);
        let c = derive_seed(8, stream::SPARSE_VECTOR);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, stream::SPARSE_VECTOR));
    }

    #[test]
    fn mix_is_the_splitmix_finalizer() {
        // First output of SplitMix64 seeded with 0 is mix(GOLDEN_GAMMA).
        assert_eq!(mix(GOLDEN_GAMMA), 0xE220_A839_7B1D_CDAF);
    }
}
