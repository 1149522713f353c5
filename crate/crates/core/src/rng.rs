//! Deterministic random streams.
//!
//! All randomness flows from explicit seeds through ChaCha8, so runs are
//! reproducible across platforms. Normal deviates use the Box-Muller
//! transform over the uniform stream; per-parameter streams are derived by
//! hashing the root seed with the parameter id, which makes initial values
//! independent of registration order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

pub struct SeededRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Stream for one named parameter: seed = SHA-256(root_seed_le || id).
    pub fn for_name(root_seed: u64, id: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(root_seed.to_le_bytes());
        hasher.update(id.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        SeededRng {
            inner: ChaCha8Rng::from_seed(seed),
            spare_normal: None,
        }
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller; the second deviate of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Unbiased integer in [0, n) by rejection.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n64 = n as u64;
        let zone = u64::MAX - (u64::MAX % n64);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return (v % n64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `count` distinct indices from [0, n), in increasing order.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        if count >= n {
            return (0..n).collect();
        }
        let mut pool: Vec<usize> = (0..n).collect();
        // partial Fisher-Yates: the first `count` slots end up uniform
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        let mut picked = pool[..count].to_vec();
        picked.sort_unstable();
        picked
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(123);
        let mut b = SeededRng::new(123);
        for _ in 0..1000 {
            assert_eq!(a.uniform(), b.uniform());
        }
    }

    #[test]
    fn different_seeds_diverge_quickly() {
        let mut a = SeededRng::new(1);
        let mut b = SeededRng::new(2);
        let differs = (0..10).any(|_| a.uniform() != b.uniform());
        assert!(differs);
    }

    #[test]
    fn normal_mean_near_zero() {
        let mut rng = SeededRng::new(7);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| rng.normal()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
    }

    #[test]
    fn per_name_streams_are_independent_of_order() {
        let mut a = SeededRng::for_name(42, "w_b");
        let mut b = SeededRng::for_name(42, "w_b");
        assert_eq!(a.normal(), b.normal());
        let mut c = SeededRng::for_name(42, "w_c");
        assert_ne!(SeededRng::for_name(42, "w_b").uniform(), c.uniform());
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = SeededRng::new(9);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
        }
    }

    #[test]
    fn sample_indices_distinct_sorted() {
        let mut rng = SeededRng::new(4);
        let picked = rng.sample_indices(100, 25);
        assert_eq!(picked.len(), 25);
        for w in picked.windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}
