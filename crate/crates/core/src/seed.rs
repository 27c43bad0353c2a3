//! Deterministic seed derivation: every random stream is a ChaCha8 generator
//! keyed by the user seed plus a fixed path of labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with each label in turn.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Stream labels.
pub mod label {
    pub const INIT_G: u64 = 1;
    pub const INIT_DP: u64 = 2;
    pub const INIT_DF: u64 = 3;
    pub const INIT_F: u64 = 4;
    pub const IDENTITY: u64 = 10;
    pub const PAIR: u64 = 11;
    pub const FOLDS: u64 = 12;
    pub const EXTRACTOR_POOL: u64 = 13;
    pub const BATCH: u64 = 20;
    pub const PRETRAIN: u64 = 21;
    pub const NEGATIVES: u64 = 30;
    pub const RUN: u64 = 40;
}
