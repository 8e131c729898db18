//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic task (ACS restart, replicate, class draw, CV fold,
//! bootstrap resample) gets its own ChaCha8 generator whose seed is derived
//! from the user seed and a task path with SplitMix64 mixing. Streams are
//! therefore independent of scheduling order and of how many other tasks
//! run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a task path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

/// Stable tag for a text label (FNV-1a).
pub fn label_tag(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
