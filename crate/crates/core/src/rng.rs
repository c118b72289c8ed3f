//! Deterministic, splittable random streams.
//!
//! A stream is ChaCha8 keyed by `seed` with the ChaCha stream counter set to
//! `stream_id`, so `(seed, stream_id)` pins the sequence regardless of how
//! many threads draw from other streams. Gaussian samples use the
//! Box-Muller transform on pairs of open-interval uniforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, Tensor};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Uniform on the open interval (-1, 1).
    Uniform,
    /// Standard normal.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on (0, 1), 53-bit resolution, never 0 or 1.
    pub fn next_open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (-1, 1). The 24-bit grid keeps every value exactly
    /// representable in `f32`, so the open bounds survive the cast.
    pub fn next_uniform(&mut self) -> f64 {
        let k = (self.rng.next_u64() >> 40) as f64;
        2.0 * ((k + 0.5) / (1u64 << 24) as f64) - 1.0
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn next_index(&mut self, bound: usize) -> usize {
        (self.next_open01() * bound as f64) as usize % bound.max(1)
    }

    pub fn sample_vec(&mut self, len: usize, dist: Distribution) -> Vec<f64> {
        (0..len)
            .map(|_| match dist {
                Distribution::Uniform => self.next_uniform(),
                Distribution::Gaussian => self.next_gaussian(),
            })
            .collect()
    }

    pub fn sample<T: Real>(&mut self, shape: &[usize], dist: Distribution) -> Result<Tensor<T>> {
        let len = shape.iter().product();
        Tensor::from_f64_slice(shape, &self.sample_vec(len, dist))
    }
}

/// Draws a tensor from a fresh stream `(seed, stream_id)`.
pub fn sample<T: Real>(stream: &RngStream, shape: &[usize], dist: Distribution) -> Result<Tensor<T>> {
    RngStream::new(stream.seed, stream.stream_id).sample(shape, dist)
}
