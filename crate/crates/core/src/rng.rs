//! Seeded randomness.
//!
//! Every stochastic component draws from [`SeededRng`], a ChaCha8 stream
//! keyed by a 64-bit seed. ChaCha8 output is specified independently of
//! platform and word size, so identical seeds give identical streams
//! everywhere. Sub-streams (replicates, restarts, CV repeats) are keyed by
//! [`derive_seed`], a SplitMix64 mix of the parent seed and a stream index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer applied to `seed + stream * golden`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
