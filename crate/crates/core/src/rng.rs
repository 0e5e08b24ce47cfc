//! Deterministic random streams.
//!
//! Every randomized component draws from a named substream derived from one
//! 64-bit run seed, so full runs are reproducible and parallel workers can
//! own independent streams without coordination.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn seeded(mix: u64) -> ChaCha12Rng {
    let mut state = mix;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// A named substream of the run seed.
pub fn substream(seed: u64, name: &str) -> ChaCha12Rng {
    seeded(seed ^ fnv1a(name.as_bytes()))
}

/// A per-item substream, e.g. one per rendered image or per training sample.
/// Independent of thread scheduling.
pub fn substream_indexed(seed: u64, name: &str, index: u64) -> ChaCha12Rng {
    seeded(seed ^ fnv1a(name.as_bytes()) ^ index.wrapping_mul(0xa076_1d64_78bd_642f))
}
