//! Seed splitting.
//!
//! Every random stream is derived from one top-level `u64` seed by hashing the
//! path of stream labels (for example `[trial, agent]` or `[multistart]`)
//! through SplitMix64. Streams are `ChaCha8Rng` instances, so any artifact is
//! reproducible from the top-level seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a label path.
pub fn split_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn stream(seed: u64, labels: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(split_seed(seed, labels))
}
