#![allow(dead_code)]

pub mod oracles;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
pub use cowseg::losses::{random_labels, random_simplex};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
