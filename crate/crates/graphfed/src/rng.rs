//! Seeded RNG streams.
//!
//! Every randomized stage derives its own independent stream from the run
//! seed plus a small tag tuple, so stages (and workers) can execute in any
//! order or in parallel without perturbing each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; mixes tag words into a seed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream keyed by `(seed, tags...)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut s = mix(seed);
    for &t in tags {
        s = mix(s ^ t);
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Stream tags, one per randomized stage.
pub mod tag {
    pub const SBM_EDGES: u64 = 1;
    pub const SBM_FEATURES: u64 = 2;
    pub const SBM_SPLIT: u64 = 3;
    pub const DELETE: u64 = 4;
    pub const PARTITION: u64 = 5;
    pub const OVERLAP_SAMPLE: u64 = 6;
    pub const PARAM_INIT: u64 = 7;
    pub const TRAIN: u64 = 8;
}
