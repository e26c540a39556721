//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, stream, lane)`: the seed fixes the
//! ChaCha key, the stream selects the ChaCha stream id (the step index for the
//! integrator) and the lane selects a disjoint 2^32-word window inside that
//! stream (the particle id). Draws therefore never depend on which thread
//! handles which particle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream reserved for initial conditions.
pub const INIT_STREAM: u64 = u64::MAX;

const LANE_WORDS: u32 = 32;

/// Generator for one `(seed, stream, lane)` window.
pub fn keyed_rng(seed: u64, stream: u64, lane: u64) -> ChaCha8Rng {
    debug_assert!(lane < 1u64 << 36, "lane index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((lane as u128) << LANE_WORDS);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for grid point `(i, j)` of a sweep.
pub fn derive_seed(base: u64, i: u64, j: u64) -> u64 {
    mix64(mix64(base ^ mix64(i)) ^ mix64(j.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// FNV-1a, used to fingerprint configurations.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
