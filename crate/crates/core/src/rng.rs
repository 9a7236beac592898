//! Seed mixing and generator construction.
//!
//! Every random quantity in the crate is drawn from a `ChaCha8Rng` seeded
//! from a 64-bit value, so results are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// The SplitMix64 output function: add the golden-ratio increment, then
/// apply the two xor-shift-multiply rounds. A bijection on `u64`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-stream of `seed` identified by `tag`.
pub fn stream_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn rng_from_seed(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used inside a trial.
pub mod tags {
    pub const GRAPH: u64 = 1;
    pub const EVOLUTION: u64 = 2;
    pub const SIGNS: u64 = 3;
    pub const LANCZOS: u64 = 4;
    pub const TEST_VECTOR: u64 = 5;
    pub const GOE: u64 = 6;
    pub const SDE: u64 = 7;
    pub const PROJECTIONS: u64 = 8;
}
