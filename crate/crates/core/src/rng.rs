//! Seed derivation. Every random source in the pipeline is a ChaCha8 stream
//! keyed by a 64-bit seed mixed from a master seed and a fixed counter path,
//! so results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` along the counter `tag`.
#[inline]
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, tag: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a: u64 = rng_for(7, 1).random();
        let b: u64 = rng_for(7, 1).random();
        let c: u64 = rng_for(7, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive(1, 0), derive(0, 1));
    }
}
