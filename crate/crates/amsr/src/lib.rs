//! Files and command line for the AMSR super-resolution toolkit: PNG IO,
//! dataset manifests, checkpoints, run configs, reports and the commands
//! behind the `amsr` binary. The numerics live in `amsr-core`.

pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod png;
pub mod published;
pub mod report;
pub mod runconfig;

pub use error::{AppError, Result};

/// Sizes the global rayon pool from `AMSR_THREADS` when set. Results do
/// not depend on the thread count.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("AMSR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| AppError::Usage(format!("AMSR_THREADS=`{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| AppError::Usage(format!("cannot size thread pool: {e}")))
}
