//! Parallel execution helpers.
//!
//! Every data-parallel loop in the crate funnels through [`map`], which runs
//! on rayon when the `parallel` feature is enabled and degrades to a plain
//! sequential loop otherwise. Outputs are collected in input order, so both
//! paths produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, parallel when the `parallel` feature is on.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Always-sequential variant, kept public so benchmarks can compare the two
/// paths on the same workload.
pub fn sequential_map<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Always-parallel variant for benchmarks.
#[cfg(feature = "parallel")]
pub fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
