//! Seedable random streams.
//!
//! Every stream is ChaCha8 (`rand_chacha`), keyed by a 64-bit seed and a
//! 64-bit stream number. ChaCha output is specified bit-for-bit, so a
//! `(seed, stream)` pair yields the same sequence on every platform. Gaussian
//! draws use the ziggurat sampler from `rand_distr`; both crates are pinned
//! through `Cargo.lock`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent stream `stream` derived from `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen::<u64>()
    }
}
