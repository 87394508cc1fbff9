use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Deterministic, splittable random stream.
///
/// Identical seeds give identical sequences on every platform. Sub-streams
/// for tasks, probes or trials come from [`RngStream::split`], which derives
/// a child seed from the parent seed and a key without consuming parent state.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

/// The draw kinds offered by [`RngStream::draw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawKind {
    Uniform01,
    Gaussian,
    Rademacher,
    Permutation(usize),
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream for `key`.
    pub fn split(&self, key: u64) -> Self {
        Self::new(splitmix64(splitmix64(self.seed) ^ splitmix64(key ^ 0xA5A5_5A5A_0F0F_F0F0)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Standard normal via Box–Muller (one value per two uniforms).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Uniform integer in `0..n` without modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Uniform random permutation of `0..n` (Fisher–Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    /// `count` values of the given kind; permutations yield indices as `f64`.
    pub fn draw(&mut self, kind: DrawKind, count: usize) -> Vec<f64> {
        match kind {
            DrawKind::Uniform01 => (0..count).map(|_| self.uniform01()).collect(),
            DrawKind::Gaussian => (0..count).map(|_| self.gaussian()).collect(),
            DrawKind::Rademacher => (0..count).map(|_| self.rademacher()).collect(),
            DrawKind::Permutation(n) => self.permutation(n).into_iter().map(|i| i as f64).collect(),
        }
    }
}
