//! Deterministic seed derivation.
//!
//! Every random stream is a pure function of a master seed and a path of
//! integer labels, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `labels` into `seed`.
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix(seed), |acc, &l| splitmix(acc ^ splitmix(l)))
}

pub fn rng(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, labels))
}

pub mod stream {
    pub const DESIGN: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const DATA: u64 = 3;
    pub const TRIAL: u64 = 4;
    pub const FAKE: u64 = 5;
    pub const SUBSAMPLE: u64 = 6;
}
