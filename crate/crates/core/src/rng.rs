//! Deterministic seed derivation.
//!
//! Every random stream in a campaign is a `ChaCha8Rng` whose seed is derived
//! from the master seed and a path of integer tags (trial, iteration, purpose).
//! Streams never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream purposes used as the first tag after the master seed.
pub mod stream {
    pub const REFERENCE: u64 = 1;
    pub const TRIAL: u64 = 2;
    pub const POOL: u64 = 3;
    pub const FIT: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const INIT: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of tags into a single 64-bit seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(master: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tags))
}
