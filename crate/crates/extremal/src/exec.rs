//! Data-parallel map with a sequential fallback.
//!
//! All batch computations in this crate (grid cells, sliding windows,
//! bootstrap and Monte Carlo replicates) are independent pure functions of
//! their inputs, so they can be evaluated in any order. `map_collect`
//! preserves input order in the output, which keeps results identical
//! between the parallel and sequential builds.

#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}
