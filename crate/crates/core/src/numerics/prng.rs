//! Seeded random streams.
//!
//! Backed by ChaCha8 (a counter-based generator). Uniforms take the top 53 bits
//! of each 64-bit output; normals use the Box-Muller transform and consume
//! uniforms in pairs, caching the second variate.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub const PRNG_ALGORITHM: &str = "chacha8-boxmuller";

#[derive(Debug, Clone)]
pub struct Prng {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Prng {
            seed,
            stream,
            rng,
            spare_normal: None,
        }
    }

    pub fn algorithm(&self) -> &'static str {
        PRNG_ALGORITHM
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        assert!(lo < hi, "uniform range must be non-empty");
        (0..n).map(|_| lo + (hi - lo) * self.next_f64()).collect()
    }

    pub fn standard_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }

    pub fn normal_vec<T: Scalar>(&mut self, n: usize, std: f64) -> Vec<T> {
        (0..n).map(|_| T::lit(std * self.next_normal())).collect()
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in sampling order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Draws `n` standard normal variates from a fresh generator.
pub fn prng_standard_normal(seed: u64, n: usize) -> Vec<f64> {
    Prng::new(seed).standard_normal(n)
}

pub fn prng_uniform(seed: u64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    Prng::new(seed).uniform(lo, hi, n)
}
