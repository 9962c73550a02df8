//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, work is spread over a rayon pool whose size
//! comes from `EPI_THREADS` (`0` forces the sequential path). Results are
//! always collected in input order, so output never depends on the thread
//! count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Worker count requested through `EPI_THREADS`; `None` when unset or invalid.
pub fn env_threads() -> Option<usize> {
    std::env::var("EPI_THREADS").ok()?.trim().parse().ok()
}

/// Whether parallel execution is compiled in and not disabled by `EPI_THREADS=0`.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && env_threads() != Some(0)
}

/// Runs `f` inside a pool sized by `EPI_THREADS` when one is requested.
pub fn with_env_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = env_threads().filter(|&n| n > 0) {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    f()
}

/// Order-preserving map.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Sequential reference used by benchmarks and equivalence tests.
pub fn map_sequential<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}
