//! Deterministic seeding: replica RNGs are derived from a master seed and a
//! replica index, so results are independent of worker-thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Hash of `(seed, index)` used as a stream key.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    mix(mix(seed) ^ mix(index.wrapping_add(0x5851f42d4c957f2d)))
}

/// RNG for one replica.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, index))
}

/// Exponential clock of the given rate via inversion: `-ln(U)/rate` with
/// `U` uniform on (0, 1].
pub fn exp_clock(rate: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!(rate > 0.0);
    -(1.0 - rng.random::<f64>()).ln() / rate
}
