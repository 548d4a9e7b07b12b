//! Counter-based seeding: every random stream is addressed by the master
//! seed plus a path of integers, so draws do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_INIT: u64 = 1;
pub const TAG_PHYSICS: u64 = 2;
pub const TAG_BATCH: u64 = 3;
pub const TAG_RECORD: u64 = 4;
pub const TAG_EVAL: u64 = 5;
pub const TAG_DATASET: u64 = 6;
pub const TAG_HOLDOUT: u64 = 7;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator for `(seed, path...)`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for &p in path {
        h = splitmix(h ^ splitmix(p));
    }
    ChaCha8Rng::seed_from_u64(h)
}
