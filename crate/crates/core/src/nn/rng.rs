//! Seeded, forkable random streams.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use super::Tensor2;
use crate::{Error, Result};

/// A ChaCha8 stream identified by `(seed, stream)`.
///
/// One root seed per run is forked into labelled child streams so that,
/// for example, environment noise and minibatch sampling never share draws.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream. The child depends only on this
    /// stream's identity and the label, never on how many draws were taken.
    pub fn fork(&self, label: u64) -> Rng {
        let stream = splitmix64(self.stream ^ splitmix64(label.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(hi >= lo) {
            return Err(Error::contract(format!(
                "uniform range [{lo}, {hi}] is empty"
            )));
        }
        // lo + u (hi - lo) can round up to hi; keep the draw inside the box.
        Ok((lo + self.uniform01() * (hi - lo)).clamp(lo, hi))
    }

    /// Uniform index in `0..n`. Panics when `n == 0`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard normal draw via the Box–Muller transform.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform01(); // (0, 1]
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn gaussian_tensor(&mut self, rows: usize, cols: usize) -> Tensor2 {
        let data = (0..rows * cols).map(|_| self.gaussian()).collect();
        Tensor2::from_vec(rows, cols, data).expect("sized buffer")
    }

    /// Symmetric Beta(alpha, alpha) draw.
    pub fn beta(&mut self, alpha: f64) -> Result<f64> {
        let dist = Beta::new(alpha, alpha)
            .map_err(|e| Error::contract(format!("beta({alpha}, {alpha}): {e}")))?;
        Ok(dist.sample(&mut self.inner))
    }
}

impl RngCore for Rng {
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

/// Stable labels for the per-run child streams.
pub mod streams {
    pub const ENV: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const MINIBATCH: u64 = 3;
    pub const MIXUP: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHAPING: u64 = 6;
    pub const DEMO: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.uniform01().to_bits(), b.uniform01().to_bits());
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        }
    }

    #[test]
    fn forks_are_independent_of_parent_usage() {
        let a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..10 {
            b.uniform01();
        }
        let mut fa = a.fork(3);
        let mut fb = b.fork(3);
        assert_eq!(fa.next_u64(), fb.next_u64());
        let mut other = a.fork(4);
        let mut same = a.fork(3);
        assert_ne!(same.next_u64(), other.next_u64());
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut rng = Rng::new(1);
        for _ in 0..100_000 {
            let x = rng.uniform(0.8, 0.9).unwrap();
            assert!((0.8..=0.9).contains(&x));
        }
    }

    #[test]
    fn uniform_rejects_reversed_range() {
        let mut rng = Rng::new(1);
        assert!(matches!(rng.uniform(1.0, 0.0), Err(Error::Contract(_))));
        assert!(rng.uniform(f64::NAN, 1.0).is_err());
        assert_eq!(rng.uniform(2.0, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(2024);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn beta_one_is_in_unit_interval() {
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            let l = rng.beta(1.0).unwrap();
            assert!((0.0..=1.0).contains(&l));
        }
        assert!(rng.beta(0.0).is_err());
    }
}
