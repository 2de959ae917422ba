//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! run seed, so that adding or removing one consumer never shifts the draws
//! seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random source used throughout the crate.
pub type RandomSource = ChaCha8Rng;

/// Stream reserved for optimizer selection inside the meta-loop.
pub const SELECTION_STREAM: u64 = 1;

/// First stream id handed to base optimizers; genome `i` gets `GENOME_STREAM_BASE + i`.
pub const GENOME_STREAM_BASE: u64 = 100;

/// A deterministic stream for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> RandomSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits a fresh child generator off `rng`.
pub fn fork(rng: &mut RandomSource) -> RandomSource {
    use rand::RngCore;
    ChaCha8Rng::seed_from_u64(rng.next_u64())
}
