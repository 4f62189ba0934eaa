pub mod crossmodel;
pub mod decode;
pub mod eval;
pub mod synth;

use crate::CliError;

/// Run `f` inside a rayon pool of the requested size (or the default pool
/// when unset). Pool size never affects results, only wall time.
pub fn with_pool<T>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError>
where
    T: Send,
{
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| {
                    CliError::general(braindec_core::Error::InvalidConfig(format!(
                        "failed to build worker pool: {e}"
                    )))
                })?;
            Ok(pool.install(f))
        }
    }
}
