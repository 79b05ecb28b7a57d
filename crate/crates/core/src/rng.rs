//! Seeding scheme.
//!
//! Every random draw in the crate comes from a ChaCha8 generator addressed by
//! a `(seed, stream)` pair. Different streams of the same seed are
//! independent, and the same pair always reproduces the same sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used for the base ensemble of a multilevel run and for single-level
/// runs. Level pairs use their fine level index as stream id.
pub const BASE_STREAM: u64 = u64::MAX;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a tag (splitmix64 finaliser
/// applied to the combined value).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
