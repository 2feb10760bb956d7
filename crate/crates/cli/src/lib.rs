//! Library surface behind the `rescnn` binary: run configuration, the
//! training driver, the synthetic benchmark and the four commands.

pub mod commands;
pub mod config;
pub mod metrics_doc;
pub mod synth;
pub mod train;

use rescnn_core::error::Error;

/// Stable process exit codes.
pub mod exit {
    /// Success (and `synth-check --report-only`).
    pub const OK: i32 = 0;
    /// Generic failure, including a missed synth-check accuracy bar.
    pub const FAILURE: i32 = 1;
    /// Configuration rejected.
    pub const CONFIG: i32 = 2;
    /// Dataset, checkpoint or other I/O problems.
    pub const DATA: i32 = 3;
    /// Numeric divergence (non-finite loss or gradients).
    pub const DIVERGED: i32 = 4;
}

/// Map a library error onto the documented exit codes.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => exit::CONFIG,
        Error::Data { .. } | Error::Io { .. } | Error::Checkpoint { .. } | Error::Json { .. } => {
            exit::DATA
        }
        Error::NonFinite { .. } => exit::DIVERGED,
        _ => exit::FAILURE,
    }
}
