//! Deterministic fan-out of independent trials.
//!
//! Each trial derives its own RNG stream from its index, and results are
//! returned in trial order, so any reduction over them gives the same bits no
//! matter how many workers ran.

use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

use crate::error::{Result, TsdError};

/// How many trials to run, from which master seed, on how many workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunParams {
    pub n_trials: u64,
    pub master_seed: u64,
    /// `0` = one worker per core.
    pub workers: usize,
}

impl RunParams {
    pub fn new(n_trials: u64, master_seed: u64) -> Self {
        Self {
            n_trials,
            master_seed,
            workers: 0,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    pub(crate) fn require_trials(&self, min: u64) -> Result<()> {
        if self.n_trials < min {
            return Err(TsdError::invalid(
                "n_trials",
                format!("need at least {min}, got {}", self.n_trials),
            ));
        }
        Ok(())
    }
}

/// Runs `f(0..n)` on `workers` threads (`0` = one per core) and returns the
/// results in index order.
pub fn map_trials<T, F>(n: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    match ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).into_par_iter().map(&f).collect(),
    }
}
