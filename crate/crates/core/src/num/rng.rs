use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Complex;
use crate::error::{Result, SsbError};

/// Seeded, platform-independent random stream.
///
/// Backed by ChaCha8; Gaussian variates come from the ziggurat transform in
/// `rand_distr`, which is a deterministic function of the uniform output.
/// Independent substreams for parallel work are obtained with [`fork`].
///
/// [`fork`]: RngStream::fork
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, stream, inner }
    }

    /// A fresh stream keyed by `(seed, id)`, independent of the parent's position.
    pub fn fork(&self, id: u64) -> RngStream {
        // stream 0 is the root; children are 1-based and mixed with the parent's id
        let stream = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(id.wrapping_add(1));
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Complex Gaussian whose real and imaginary parts are independent with the
/// given variance each. A zero variance yields exactly `0 + 0i`.
pub fn sample_complex_gaussian(rng: &mut RngStream, variance: f64) -> Result<Complex> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(SsbError::arg(format!(
            "variance must be finite and non-negative, got {variance}"
        )));
    }
    let sd = variance.sqrt();
    let re = rng.normal() * sd;
    let im = rng.normal() * sd;
    Ok(Complex::new(re, im))
}
