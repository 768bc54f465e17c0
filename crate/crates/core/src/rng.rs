//! Seeded random streams.
//!
//! Every stochastic step (bootstrap draws, feature subsets, shuffles, fold
//! assignment, background sampling) draws from ChaCha with 8 rounds
//! (`rand_chacha::ChaCha8Rng`), keyed by a `u64` seed expanded with
//! `SeedableRng::seed_from_u64` and separated into independent streams by
//! `set_stream`. ChaCha output is platform independent, so a seed reproduces
//! the same draws on any machine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator for `seed`, positioned on stream `stream`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
