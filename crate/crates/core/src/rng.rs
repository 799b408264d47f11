//! Portable seeded randomness.
//!
//! The generator is ChaCha8 (`rand_chacha` 0.9, seeded through
//! `SeedableRng::seed_from_u64`). Every derived draw (unit floats, bounded
//! integers, shuffles, subsets) is implemented here on top of raw `next_u64`
//! output, so results are identical on every platform and do not move when
//! `rand`'s distribution code changes.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)` by rejection sampling. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n` (partial Fisher-Yates), in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-example seed: `base ^ splitmix64(index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base ^ splitmix64(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_pinned() {
        // Frozen from the first run; a change here means cross-version drift.
        let mut rng = SeededRng::new(42);
        let first: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        let mut again = SeededRng::new(42);
        let second: Vec<u64> = (0..3).map(|_| again.next_u64()).collect();
        assert_eq!(first, second);
        assert_eq!(first, PINNED_42.to_vec());
    }

    const PINNED_42: [u64; 3] = [12578764544318200737, 17529487244874322312, 7886285670807131020];

    #[test]
    fn below_is_in_range_and_covers() {
        let mut rng = SeededRng::new(1);
        let mut hits = [0usize; 7];
        for _ in 0..7000 {
            hits[rng.below(7)] += 1;
        }
        assert!(hits.iter().all(|&h| h > 800), "{hits:?}");
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = SeededRng::new(9);
        for k in 0..=12 {
            let mut v = rng.sample_indices(10, k);
            assert_eq!(v.len(), k.min(10));
            v.sort_unstable();
            v.dedup();
            assert_eq!(v.len(), k.min(10));
            assert!(v.iter().all(|&i| i < 10));
        }
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut rng = SeededRng::new(3);
        let mut v: Vec<u32> = (0..20).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 5), derive_seed(7, 5));
    }
}
