//! Library surface of the `braindec` binary: stage implementations and
//! run-record handling, reused by the integration and acceptance suites.

pub mod commands;
pub mod record;

/// Stage failure paired with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: braindec_core::Error,
}

impl CliError {
    pub fn general(error: braindec_core::Error) -> CliError {
        CliError { code: 1, error }
    }
}

/// Common flags threaded through every stage.
#[derive(Clone, Copy, Default)]
pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub reproducible: bool,
}
