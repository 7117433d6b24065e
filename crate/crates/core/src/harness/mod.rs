//! Experiment runner: configuration, optimization runs, learning-rate
//! sweeps and result files.

pub mod config;
pub mod emit;
pub mod run;
pub mod stats;
pub mod sweep;

pub use config::{ExperimentConfig, Task};
pub use emit::{emit, OutputFormat};
pub use run::{run, run_seed, ConvergenceRecord, RunStatus, StepRow};
pub use sweep::{sweep, SweepCell, SweepSummary, DEFAULT_RATES};

use crate::error::{Error, Result};

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "CVQNG_THREADS";

/// Pool sized by [`THREADS_ENV`], defaulting to the available cores.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}
