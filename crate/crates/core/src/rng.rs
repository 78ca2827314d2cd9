//! Counter-style random streams.
//!
//! Every stochastic consumer draws from its own ChaCha stream keyed by
//! `(seed, domain, a, b)`, e.g. `(seed, FILTER, step, particle)`. Streams do
//! not depend on evaluation order, so per-particle work can run in any order
//! or in parallel and still produce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains used across the workspace.
pub mod domain {
    pub const TRUTH_BIAS: u64 = 1;
    pub const TRUTH_CLOCK: u64 = 2;
    pub const RECEIVER_NOISE: u64 = 3;
    pub const FILTER_INIT: u64 = 4;
    pub const FILTER_STEP: u64 = 5;
    pub const STATIC_CMM: u64 = 6;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent generator for the given key.
pub fn stream(seed: u64, domain: u64, a: u64, b: u64) -> StreamRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    let words = [
        splitmix64(&mut state) ^ domain.wrapping_mul(0xD6E8_FEB8_6659_FD93),
        splitmix64(&mut state) ^ a.wrapping_mul(0xA076_1D64_78BD_642F),
        splitmix64(&mut state) ^ b.wrapping_mul(0xE703_7ED1_A0B4_28DB),
        splitmix64(&mut state),
    ];
    // one more mixing round so nearby keys do not share prefixes
    let mut mix = words[0] ^ words[1].rotate_left(17) ^ words[2].rotate_left(41);
    for (chunk, w) in key.chunks_exact_mut(8).zip(words.iter()) {
        let v = splitmix64(&mut mix) ^ w;
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
