//! Execution policy for the data-parallel loops (support enumeration and
//! Monte-Carlo trials).
//!
//! Parallel execution needs the `parallel` feature; without it every
//! [`Exec::Parallel`] request runs sequentially. Both paths produce identical
//! results: maps keep input order and reductions are only ever given
//! combiners that define a total order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this policy will actually fan out on the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps `f` over `0..n` and folds with `combine`. `combine` must be
/// associative and must not depend on argument order, else parallel runs may
/// disagree with sequential ones.
pub fn map_reduce<T, F, C>(exec: Exec, n: usize, f: F, combine: C) -> Option<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
    C: Fn(T, T) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).reduce_with(combine);
    }
    let _ = exec;
    (0..n).map(f).reduce(combine)
}
