//! Command implementations behind the `pyrdepth` binary.

pub mod bench;
pub mod eval;
pub mod infer;
pub mod raster;
pub mod synthetic;
pub mod verify;
pub mod weights_cmd;

use anyhow::{Context, Result};

/// Environment variable capping worker threads; unset or 0 means one per core.
pub const THREADS_ENV: &str = "PYRDEPTH_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`]. Call once, early.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a non-negative integer, got `{raw}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool already initialised")?;
    }
    Ok(())
}
