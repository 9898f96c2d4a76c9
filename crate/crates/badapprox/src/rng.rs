//! Seeded, shard-stable random streams.
//!
//! Work is split into fixed-size shards. Shard `i` draws from a ChaCha8
//! stream with the caller's seed and stream number `i`, so the result of a
//! run depends only on (seed, samples), never on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per shard.
pub const SHARD: u64 = 1 << 14;

/// Generator for one shard.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// 53 random bits; the uniform value is `bits * 2^-53`.
#[inline]
pub fn unit_bits(rng: &mut impl RngCore) -> u64 {
    rng.next_u64() >> 11
}

/// Uniform on [0,1).
#[inline]
pub fn unit(rng: &mut impl RngCore) -> f64 {
    unit_bits(rng) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Runs `samples` Bernoulli trials in parallel shards and counts successes.
/// `trial` receives the shard generator and must consume it the same way
/// on every call.
pub fn count_hits<F>(samples: u64, seed: u64, trial: F) -> u64
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    let shards = samples.div_ceil(SHARD);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = shard_rng(seed, s);
            let len = SHARD.min(samples - s * SHARD);
            (0..len).filter(|_| trial(&mut rng)).count() as u64
        })
        .sum()
}

/// Binomial proportion and its standard error.
pub fn proportion(hits: u64, samples: u64) -> (f64, f64) {
    if samples == 0 {
        return (0.0, 0.0);
    }
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shards_are_reproducible() {
        let a = count_hits(100_000, 7, |r| unit(r) < 0.3);
        let b = count_hits(100_000, 7, |r| unit(r) < 0.3);
        assert_eq!(a, b);
        let (p, se) = proportion(a, 100_000);
        assert!((p - 0.3).abs() < 4.0 * se);
    }

    #[test]
    fn different_seeds_differ() {
        let a = count_hits(50_000, 1, |r| unit(r) < 0.5);
        let b = count_hits(50_000, 2, |r| unit(r) < 0.5);
        assert_ne!(a, b);
    }
}
