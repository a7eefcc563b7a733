//! Seeded PRNG streams. Every random choice in the crate draws from a
//! ChaCha8 generator whose seed is derived from a user seed plus role and
//! index offsets, so results are reproducible across platforms and runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(seed, role, index)`.
pub fn derive(seed: u64, role: u64, index: u64) -> u64 {
    mix(mix(mix(seed) ^ role) ^ index)
}

pub fn stream(seed: u64, role: u64, index: u64) -> Rng {
    seeded(derive(seed, role, index))
}
