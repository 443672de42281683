//! Configuration, orchestration and report emission for the `landau-tagged`
//! command-line tool.

pub mod checks;
pub mod commands;
pub mod config;
pub mod experiments;

pub use commands::{dispatch, Command, Outcome};
pub use config::RunConfig;

use landau_core::{Error, Result};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "LANDAU_TAGGED_THREADS";

/// Worker count from the flag, then the environment, else all cores (`0`).
pub fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| Error::InvalidParameter {
            field: THREADS_ENV.into(),
            reason: format!("`{s}` is not a thread count"),
        }),
        Err(_) => Ok(0),
    }
}

/// Runs `f` inside a dedicated pool of `threads` workers (`0` = all cores).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}
