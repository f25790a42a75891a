//! Execution mode for the data-parallel loops.
//!
//! Independent units of work (k-means restarts, GA fitness evaluations,
//! forest trees, candidate k values, regions, per-point neighbor queries) are
//! dispatched through [`map_indexed`]. Every unit derives its own RNG seed
//! from its index, and results are collected in index order, so the parallel
//! and sequential schedules produce identical output.
//!
//! Without the `parallel` feature everything runs sequentially and
//! [`set_mode`] has no effect.

use std::sync::atomic::{AtomicU8, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Parallel,
    Sequential,
}

static MODE: AtomicU8 = AtomicU8::new(0);

/// Sets the process-wide execution mode.
pub fn set_mode(mode: Mode) {
    let raw = match mode {
        Mode::Parallel => 0,
        Mode::Sequential => 1,
    };
    MODE.store(raw, Ordering::Relaxed);
}

/// The mode in effect. Always `Sequential` when built without `parallel`.
pub fn mode() -> Mode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 0 {
        Mode::Parallel
    } else {
        Mode::Sequential
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode() == Mode::Parallel && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; the first error by index wins.
pub fn try_map_indexed<R, E, F>(n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}
