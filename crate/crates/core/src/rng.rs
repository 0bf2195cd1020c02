//! Deterministic RNG streams.
//!
//! Every source of randomness in the crate derives from a single `u64` seed.
//! Parallel stages get independent substreams keyed by a stage tag and an
//! item index, so results do not depend on scheduling or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags for substream derivation. Keeping them in one place avoids
/// accidental stream collisions between stages.
pub mod tag {
    pub const SYNTH_LAYOUT: u64 = 0x01;
    pub const SYNTH_TRANSITIONS: u64 = 0x02;
    pub const SYNTH_PHENOLOGY: u64 = 0x03;
    pub const SYNTH_ROTATION: u64 = 0x04;
    pub const SYNTH_SIGNALS: u64 = 0x05;
    pub const INIT_PARAMS: u64 = 0x10;
    pub const SHUFFLE: u64 = 0x11;
    pub const AUGMENT: u64 = 0x12;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha8 stream from `(seed, tag, index)`.
pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ tag.rotate_left(24) ^ index.rotate_left(48);
    // run the mixer a few times so similar (tag, index) pairs decorrelate
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Mix two indices into one substream index (epoch/batch, batch/sequence...).
pub fn mix(a: u64, b: u64) -> u64 {
    let mut state = a.wrapping_mul(0xff51_afd7_ed55_8ccd) ^ b;
    splitmix64(&mut state)
}
