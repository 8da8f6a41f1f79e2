//! Seeded randomness.
//!
//! Every random choice in the crate comes from a ChaCha8 stream whose 256-bit
//! key is expanded from a 64-bit seed with SplitMix64. Independent streams
//! (one per trial, say) use [`derive_seed`] on the master seed and the stream
//! index, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 step.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut state = master ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut state);
    splitmix64(&mut state)
}

/// A ChaCha8 generator keyed from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
