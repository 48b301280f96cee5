//! The one seeded generator used everywhere: ChaCha20 keyed with the 64-bit
//! seed in the first eight key bytes (little-endian, remaining bytes zero),
//! with fixed stream ids separating independent uses of the same seed.
//! Uniform doubles come from the top 53 bits of a `next_u64` draw, so a
//! (seed, stream) pair reproduces bit-identical values on any platform.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform double in [0, 1).
pub fn next_unit_f64(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
