//! Seeded randomness with counter-mode stream splitting.
//!
//! Everything random in this crate flows from a single 64-bit seed. Independent
//! consumers (trials, modules, sweep points) take numbered streams of the same
//! counter-based generator, so runs are reproducible and parallelizable.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The master generator for a seed, stream 0.
pub fn master_rng(seed: u64) -> ChaCha12Rng {
    stream_rng(seed, 0)
}

/// An independent generator for (seed, stream); streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
