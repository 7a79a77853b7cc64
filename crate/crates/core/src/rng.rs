//! Deterministic random streams.
//!
//! Every stream is ChaCha8 (`rand_chacha`) keyed by `seed_from_u64`, which
//! is value-stable across platforms. Gaussian samples use the Box–Muller
//! transform on 53-bit uniforms so the output is fixed by the seed alone.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{checked_numel, Tensor};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Snapshot of a stream position, enough to resume it exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream derived from the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = Rng::new(seed);
        rng.inner.set_stream(stream);
        rng
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut rng = Rng::with_stream(state.seed, state.stream);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn range_f32(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform() as f32
    }

    /// Standard-normal pair via Box–Muller.
    fn gaussian_pair(&mut self) -> (f64, f64) {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn gaussian(&mut self) -> f64 {
        self.gaussian_pair().0
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// I.i.d. standard normal tensor.
pub fn sample_gaussian(rng: &mut Rng, shape: &[usize]) -> Result<Tensor> {
    let n = checked_numel(shape)?;
    let mut data = Vec::with_capacity(n + 1);
    while data.len() < n {
        let (a, b) = rng.gaussian_pair();
        data.push(a as f32);
        data.push(b as f32);
    }
    data.truncate(n);
    Tensor::new(shape, data)
}

/// Normal samples with stddev `stddev`, redrawn until they fall within two
/// standard deviations of zero.
pub fn init_truncated_normal(rng: &mut Rng, shape: &[usize], stddev: f32) -> Result<Tensor> {
    if !(stddev > 0.0 && stddev.is_finite()) {
        return Err(Error::Contract(format!(
            "truncated normal stddev must be positive, got {stddev}"
        )));
    }
    let n = checked_numel(shape)?;
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let (a, b) = rng.gaussian_pair();
        for z in [a, b] {
            if z.abs() <= 2.0 && data.len() < n {
                data.push((z * stddev as f64) as f32);
            }
        }
    }
    Tensor::new(shape, data)
}
