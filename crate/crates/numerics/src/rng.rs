//! Deterministic random number streams.
//!
//! All stochastic choices in the stack (weight init, data shuffling, flow
//! noise, router noise, scenario layout) draw from [`DetRng`] streams derived
//! from a base seed plus integer tags. Deriving a stream from
//! `(seed, tag, tag, ...)` always yields the same sequence, which keeps runs
//! reproducible regardless of batch grouping or evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Seeded deterministic RNG stream.
#[derive(Debug, Clone)]
pub struct DetRng {
    inner: ChaCha8Rng,
}

/// One round of the splitmix64 mixer; good avalanche for cheap tag folding.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl DetRng {
    /// Stream seeded directly from a 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Stream derived from a base seed and a list of integer tags.
    ///
    /// The same `(seed, tags)` combination always produces the same stream,
    /// and distinct tag lists produce statistically independent streams.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut state = splitmix64(seed ^ 0x6A09_E667_F3BC_C909);
        for &tag in tags {
            state = splitmix64(state ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        Self::from_seed(state)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Vector of iid normal draws with the given standard deviation.
    pub fn normal_vec(&mut self, n: usize, std: f64) -> Vec<f64> {
        (0..n).map(|_| self.normal() * std).collect()
    }

    /// Uniform integer draw in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() requires a non-empty range");
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle of a slice.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}
