//! Deterministic seed derivation.
//!
//! Every randomized component derives its stream from a master seed and a
//! small tag tuple, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tag` into `master`. Distinct tags give unrelated streams.
pub fn derive(master: u64, tag: u64) -> u64 {
    splitmix(master ^ splitmix(tag.wrapping_add(1)))
}

pub fn derive2(master: u64, a: u64, b: u64) -> u64 {
    derive(derive(master, a), b)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Component tags for meta-learner stages.
pub mod tags {
    pub const OUTCOME: u64 = 1;
    pub const CONTROL_EFFECT: u64 = 2;
    pub const TREATED_EFFECT: u64 = 3;
    pub const MEAN_OUTCOME: u64 = 4;
    pub const PROPENSITY: u64 = 5;
    pub const FINAL_STAGE: u64 = 6;
    pub const FOLD: u64 = 7;
}
