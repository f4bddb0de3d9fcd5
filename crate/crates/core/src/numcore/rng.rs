//! Seeded pseudo-randomness.
//!
//! The generator is xoshiro256** (Blackman & Vigna), seeded from a `u64`
//! through SplitMix64 as in the reference implementation. Floats in `[0, 1)`
//! take the top 53 bits of a draw: `(x >> 11) * 2^-53`.
//!
//! Substreams are derived from the *seed* only, never from the current
//! state, so drawing from one substream cannot perturb another:
//!
//! ```text
//! child_seed(seed, label) = splitmix64(seed + 0x9E3779B97F4A7C15 * (label + 1))
//! ```

use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output for the given input state.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator with documented seed splitting.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256StarStar,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the substream `label`; a pure function of `(seed, label)`.
    pub fn child_seed(seed: u64, label: u64) -> u64 {
        splitmix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(label.wrapping_add(1))))
    }

    /// Independent generator for substream `label`.
    pub fn substream(&self, label: u64) -> Rng {
        Rng::new(Self::child_seed(self.seed, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi, "uniform: lo > hi");
        let u = self.unit();
        if hi <= lo {
            return lo;
        }
        let x = lo + (hi - lo) * u;
        if x < hi {
            x
        } else {
            hi.next_down()
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_interval() {
        let mut rng = Rng::new(7);
        assert_eq!(rng.uniform(0.0, 0.0), 0.0);
        assert_eq!(rng.uniform(2.5, 2.5), 2.5);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(1234);
        let mut b = Rng::new(1234);
        for _ in 0..1000 {
            assert_eq!(a.unit().to_bits(), b.unit().to_bits());
        }
    }

    #[test]
    fn substreams_ignore_parent_draws() {
        let parent = Rng::new(99);
        let mut drained = parent.clone();
        for _ in 0..57 {
            drained.next_u64();
        }
        let mut a = parent.substream(3);
        let mut b = drained.substream(3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = parent.substream(4);
        assert_ne!(parent.substream(3).next_u64(), c.next_u64());
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut rng = Rng::new(5);
        for _ in 0..10_000 {
            let x = rng.uniform(-0.6, 0.6);
            assert!((-0.6..0.6).contains(&x));
        }
    }
}
