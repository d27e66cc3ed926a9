//! Execution helpers shared by every module that evaluates many independent
//! points: indexed parallel map and deterministic reduction.
//!
//! Results never depend on the thread count. Work is expressed as a map over
//! an index range collected in index order, and reductions go through
//! [`sum_pairwise`], so the `parallel` feature (and rayon's pool size) only
//! changes wall time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
///
/// Dispatches to the rayon pool when the `parallel` feature is enabled and
/// falls back to a plain sequential loop otherwise.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential lane of [`map_indexed`]. Always available; benchmarks use it
/// to compare against the rayon lane.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Rayon lane of [`map_indexed`].
#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Pairwise summation. Fixed association order, so the result is identical
/// run to run and does not depend on how the values were produced.
pub fn sum_pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    sum_pairwise(&xs[..mid]) + sum_pairwise(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n` without materializing the values.
pub fn sum_pairwise_of<F: Fn(usize) -> f64>(n: usize, f: &F) -> f64 {
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= 32 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    go(0, n, f)
}

/// Cap the global worker pool at `n` threads. Returns false when the pool
/// was already started (the cap must be applied before any parallel work).
/// No-op without the `parallel` feature, where everything is sequential.
#[cfg(feature = "parallel")]
pub fn limit_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn limit_threads(_n: usize) -> bool {
    true
}

/// Counter-based stream derivation: an RNG for item `idx` of the stream
/// keyed by `seed`. Chunks of indices can be generated on any thread in any
/// order and still reproduce the sequential stream exactly.
pub fn substream(seed: u64, idx: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, idx))
}

/// SplitMix64 finalizer over (seed, idx).
fn mix(seed: u64, idx: u64) -> u64 {
    let mut z = seed ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
