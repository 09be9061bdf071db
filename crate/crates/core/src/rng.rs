//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed plus a stream
//! number, so a simulation can hand each link its own substream without the
//! links perturbing each other's draws.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single-owner source of uniform variates. Same seed and stream number give
/// the same sequence on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent stream `stream` under the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform variate on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform variate on `(0, 1]`; safe to pass to `ln`.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for iteration `index` of a run keyed by `master`.
///
/// For a fixed master seed the map `index -> seed` is injective: the golden
/// gamma is odd, so `master + index * gamma` is a bijection mod 2^64 and the
/// finalizer is a bijection too.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    avalanche(master.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::substream(7, 3);
        let mut b = RngStream::substream(7, 3);
        for _ in 0..1000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::substream(7, 0);
        let mut b = RngStream::substream(7, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn frozen_first_draw() {
        // Pins the generator so a dependency bump that changes the stream is noticed.
        let mut a = RngStream::new(42);
        let first = a.next_u64();
        let mut b = RngStream::new(42);
        assert_eq!(first, b.next_u64());
        assert_eq!(first, FIRST_U64_SEED_42);
    }

    const FIRST_U64_SEED_42: u64 = 12_578_764_544_318_200_737;

    #[test]
    fn uniform_ranges() {
        let mut r = RngStream::new(1);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = r.uniform_open0();
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn mix_seed_injective_on_run() {
        let seeds: HashSet<u64> = (0..100_000).map(|k| mix_seed(42, k)).collect();
        assert_eq!(seeds.len(), 100_000);
    }
}
