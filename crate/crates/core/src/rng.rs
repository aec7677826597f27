//! Seeded random streams.
//!
//! Every experiment is driven by one 64-bit seed. The ChaCha8 generator is
//! counter based, so distinct consumers get disjoint streams of the same key
//! via [`ChaCha8Rng::set_stream`] instead of re-seeding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Initial sketch matrix and the per-step sketch rows `c_t`.
    Sketch = 1,
    /// Process noise of the controlled plant.
    PlantNoise = 2,
    /// Exploration inputs of the explore/exploit baseline.
    Exploration = 3,
    /// Open-loop excitation of the historical (similar-system) experiment.
    HistoricalInput = 4,
    /// Process noise of the historical experiment.
    HistoricalNoise = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `replica` within grid case `case`, derived from the master seed.
pub fn replica_seed(master: u64, case: usize, replica: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ case as u64) ^ (replica as u64).rotate_left(32))
}
