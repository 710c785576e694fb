//! Seed derivation. Every stochastic component draws from its own
//! ChaCha stream keyed by `(global seed, stream id)` so results do not depend
//! on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Deterministic uniform in `[0, 1)` for `(seed, stream)`.
pub fn uniform_for(seed: u64, stream: u64) -> f64 {
    (derive_seed(seed, stream) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Named stream ids so unrelated components never share a generator.
pub mod streams {
    pub const EMBEDDINGS: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const SPONSORED: u64 = 3;
    pub const BIDS: u64 = 4;
    pub const WALK_GRAPH: u64 = 5;
    pub const HISTORIES: u64 = 6;
    pub const TRAJECTORIES: u64 = 7;
    pub const SHOCK: u64 = 8;
    pub const FLAGS: u64 = 9;
    pub const AUDIT: u64 = 10;
}
