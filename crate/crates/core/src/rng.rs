//! Seed derivation.
//!
//! Every random draw in the toolkit comes from a [`ChaCha8Rng`] seeded by a
//! value derived from the master seed and a path of integer tags (iteration,
//! candidate, replication, ...). Nothing carries RNG state across iterations,
//! so a calibration run can be resumed from a state snapshot and reproduce
//! the uninterrupted run exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed stream tags. Keeping them in one place avoids accidental reuse of
/// the same stream by two components.
pub mod stream {
    pub const VALIDATION: u64 = 0x56;
    pub const DYNAMIC_SIM: u64 = 0x10;
    pub const DYNAMIC_HMM: u64 = 0x11;
    pub const DYNAMIC_GEN: u64 = 0x12;
    pub const HET_SIM: u64 = 0x20;
    pub const HET_PROPOSE: u64 = 0x21;
    pub const HET_GP: u64 = 0x22;
    pub const CLUSTER: u64 = 0x30;
    pub const INIT: u64 = 0x40;
    pub const TRIAL: u64 = 0x60;
}

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `r` under `master`: `master XOR splitmix64(r)`.
pub fn replication_seed(master: u64, r: u64) -> u64 {
    master ^ splitmix64(r)
}

/// Derives a child seed from a parent seed and a path of tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(parent), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
