//! Data-parallel execution helpers.
//!
//! Batch-level loops (dataset synthesis, per-sample evaluation, batch
//! inference) go through [`par_map`], which fans out over rayon when the
//! `parallel` feature is enabled and degrades to a plain sequential map
//! otherwise. [`seq_map`] is always sequential; the bench suite compares the
//! two on the same workloads.
//!
//! Results are collected in input order, so reductions over the output are
//! deterministic regardless of the execution mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for batch-level helpers that expose the choice to callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

/// Ordered map over items, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn par_map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Send + Sync,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Send + Sync,
{
    items.into_iter().map(f).collect()
}

/// Ordered sequential map, kept around as the baseline for benches.
pub fn seq_map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    F: Fn(I) -> O,
{
    items.into_iter().map(f).collect()
}

/// Dispatch on an explicit mode.
pub fn map_with<I, O, F>(mode: ExecMode, items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Send + Sync,
{
    match mode {
        ExecMode::Parallel => par_map(items, f),
        ExecMode::Sequential => seq_map(items, f),
    }
}
