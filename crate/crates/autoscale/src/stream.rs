//! Seed-derived RNG streams.
//!
//! Every source of randomness in the crate is a ChaCha8 stream keyed by
//! (root seed, domain tag, index). Streams are independent of call order,
//! which keeps parallel experiment cells reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for cheap key mixing.
#[inline]
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a child seed for (seed, domain tag, index).
pub fn derive(seed: u64, tag: &str, index: u64) -> u64 {
    mix(mix(seed ^ tag_hash(tag)) ^ index)
}

/// A ChaCha8 RNG for the given (seed, tag, index) triple.
pub fn rng(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, index))
}
