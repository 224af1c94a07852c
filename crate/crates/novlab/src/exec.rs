//! Data-parallel execution of independent jobs (seeds, arms, bootstrap
//! resamples). With the `parallel` feature (default) jobs fan out over a
//! rayon pool; without it they run sequentially on the calling thread.
//! Results keep input order either way, so outputs are identical across the
//! two modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over the items, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_jobs<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

/// Maps `f` over the items, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map_jobs<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    F: Fn(I) -> O,
{
    items.into_iter().map(f).collect()
}

/// Sequential mapping, always available; the benchmark suite compares this
/// against [`map_jobs`].
pub fn map_jobs_sequential<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    F: Fn(I) -> O,
{
    items.into_iter().map(f).collect()
}
