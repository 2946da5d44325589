//! Reproducible random streams.
//!
//! Every (grid cell, repetition) pair owns a ChaCha8 stream keyed by the
//! master seed; the stream id packs the cell index in the high 32 bits and
//! the repetition in the low 32 bits.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

/// Generator used for all stochastic forces.
pub type StreamRng = ChaCha8Rng;

/// Independent stream for one grid cell and repetition.
pub fn stream(seed: u64, cell: u64, repetition: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((cell << 32) | (repetition & 0xffff_ffff));
    rng
}

/// Source of independent standard-normal deviates.
pub trait NormalSource {
    /// Next N(0, 1) sample.
    fn standard_normal(&mut self) -> f64;
}

impl NormalSource for ChaCha8Rng {
    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}
