//! Seeded, splittable random streams.
//!
//! Every Monte-Carlo integral is identified by a key (a short list of
//! integers describing the quantity, the order and the evaluation point).
//! The key and the run seed are mixed into a ChaCha8 seed, and each shard
//! of the integral draws from its own ChaCha stream. ChaCha is a counter
//! based generator, so a (seed, key, shard) triple always reproduces the
//! same numbers on every platform, independent of thread scheduling.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Vec3;

/// SplitMix64 finalizer, used to fold keys into a seed.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a key into a 64-bit value.
pub fn fold_key(seed: u64, key: &[u64]) -> u64 {
    key.iter().fold(mix(seed), |acc, &k| mix(acc ^ mix(k)))
}

/// Hashes coordinates bit-exactly so identical points give identical keys.
pub fn point_key(points: &[Vec3]) -> u64 {
    points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0x51_7C_C1_B7_27_22_0A_95, |acc, x| mix(acc ^ x.to_bits()))
}

/// Random stream for one shard of one keyed integral.
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, key: &[u64], shard: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(fold_key(seed, key));
        inner.set_stream(shard);
        Self { inner }
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform point in the cube [-side/2, side/2)^3.
    #[inline]
    pub fn point_in_box(&mut self, side: f64) -> Vec3 {
        [
            (self.uniform() - 0.5) * side,
            (self.uniform() - 0.5) * side,
            (self.uniform() - 0.5) * side,
        ]
    }

    /// Uniform direction on the unit sphere.
    pub fn direction(&mut self) -> Vec3 {
        let cos_t = 2.0 * self.uniform() - 1.0;
        let phi = 2.0 * std::f64::consts::PI * self.uniform();
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        [sin_t * phi.cos(), sin_t * phi.sin(), cos_t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_reproduce() {
        let mut a = Stream::new(7, &[1, 2, 3], 4);
        let mut b = Stream::new(7, &[1, 2, 3], 4);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn shards_and_keys_differ() {
        let x = Stream::new(7, &[1, 2, 3], 0).uniform();
        let y = Stream::new(7, &[1, 2, 3], 1).uniform();
        let w = Stream::new(7, &[1, 2, 4], 0).uniform();
        assert_ne!(x, y);
        assert_ne!(x, w);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = Stream::new(0, &[], 0);
        let mean = (0..20_000).map(|_| s.uniform()).sum::<f64>() / 20_000.0;
        assert!((mean - 0.5).abs() < 0.01);
    }
}
