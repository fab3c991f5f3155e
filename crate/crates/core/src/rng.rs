//! Reproducible random streams.
//!
//! Every stochastic routine takes `&mut SeedableStream` (or any `Rng`)
//! explicitly. Parallel work derives one independent counter-based stream per
//! task from a master seed, so results do not depend on scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The RNG used throughout the crate.
pub type SeedableStream = ChaCha12Rng;

/// Stream `stream` of the generator family keyed by `seed`. Streams with the
/// same seed and different indices are statistically independent.
pub fn stream(seed: u64, stream: u64) -> SeedableStream {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
