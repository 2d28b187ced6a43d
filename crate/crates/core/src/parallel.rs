//! Replica-level parallelism with per-replica seeded streams. Results are
//! collected in replica order, so reports are byte-identical regardless of
//! the worker-thread count (and of whether the `parallel` feature is on).

use rand_chacha::ChaCha8Rng;

use crate::rng::replica_rng;

/// Runs `f(replica_index, rng)` for `n` replicas and collects the results
/// in index order. The RNG stream of replica `i` is derived from
/// `(seed, offset + i)`.
#[cfg(feature = "parallel")]
pub fn replica_map<T, F>(seed: u64, offset: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, ChaCha8Rng) -> T + Sync,
{
    use rayon::prelude::*;
    (0..n)
        .into_par_iter()
        .map(|i| f(i, replica_rng(seed, offset + i as u64)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn replica_map<T, F>(seed: u64, offset: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, ChaCha8Rng) -> T + Sync,
{
    replica_map_seq(seed, offset, n, f)
}

/// Sequential fallback, always available; the criterion bench compares this
/// against the parallel driver.
pub fn replica_map_seq<T, F>(seed: u64, offset: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, ChaCha8Rng) -> T + Sync,
{
    (0..n).map(|i| f(i, replica_rng(seed, offset + i as u64))).collect()
}
