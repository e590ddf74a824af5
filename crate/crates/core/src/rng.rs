//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream derived from an
//! explicit `(seed, stream)` pair, so results never depend on thread
//! scheduling or call order elsewhere in the program.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers keep the draws of different pipeline stages disjoint
/// even when they share a seed.
pub mod stream {
    pub const SIGNAL: u64 = 1;
    pub const THRESHOLDS: u64 = 2;
    pub const KACZMARZ: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const DESIGN: u64 = 5;
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
