//! Experiment drivers for manifold random features: presets, flat
//! `key=value` configuration, CSV tables and JSON manifests.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Overrides, RunContext, Scale};
pub use error::{CliError, Result};
pub use output::{all_passed, Check, Manifest};

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}
