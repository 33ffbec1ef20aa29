//! Command-line front end for the star-graph survival simulator.
//!
//! The binary exposes the simulation engines, closed-form analytics, and
//! audit machinery of `starsim-core` behind a small set of subcommands:
//!
//! * `simulate` — replicate survival runs at one parameter point and print
//!   a JSON summary (optionally exporting the per-round decomposition).
//! * `formula` — evaluate a closed-form quantity and print
//!   `{operation, inputs, output}`.
//! * `sweep` — run a parameter grid from a TOML config, writing per-point
//!   CSV, a JSON summary (with an optional exponent fit), and a manifest.
//! * `oracle` — export exact per-state expectations from the dense solver.
//! * `audit` — run one of the consistency audits (coupling dominance,
//!   non-immune floor, engine agreement, conditional round failure,
//!   failed-round residual); hard violations exit with a dedicated code.
//! * `coupled` — run coupled X/Y pairs and export per-run audit lines.
//!
//! Exit codes are a stable contract: `0` success, `2` usage or
//! configuration error, `3` capacity (a documented resource cap), `4` audit
//! failure, `1` unexpected internal error.  Data files never contain
//! timestamps, so repeated runs with the same manifest parameters are
//! byte-identical; timestamps live only in manifests.

pub mod commands;
pub mod config;
pub mod output;
pub mod runner;

use std::fmt;

pub use commands::{dispatch, Cli};

/// Process exit code for success.
pub const EXIT_OK: i32 = 0;
/// Process exit code for unexpected internal errors.
pub const EXIT_INTERNAL: i32 = 1;
/// Process exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 2;
/// Process exit code for capacity violations (documented caps).
pub const EXIT_CAPACITY: i32 = 3;
/// Process exit code for failed hard audits.
pub const EXIT_AUDIT: i32 = 4;

/// Front-end error: every variant maps onto the stable exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Error surfaced by the core library.
    Core(starsim_core::Error),
    /// Filesystem or stream failure.
    Io(std::io::Error),
    /// Configuration file problems (parse errors, missing sections, bad
    /// values).
    Config(String),
    /// Flag-level misuse not caught by the argument parser.
    Usage(String),
}

impl CliError {
    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                starsim_core::Error::InvalidParameter(_)
                | starsim_core::Error::InvalidInput(_)
                | starsim_core::Error::InsufficientData(_) => EXIT_USAGE,
                starsim_core::Error::Capacity(_) => EXIT_CAPACITY,
                starsim_core::Error::Internal(_) => EXIT_INTERNAL,
            },
            CliError::Io(_) => EXIT_INTERNAL,
            CliError::Config(_) | CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<starsim_core::Error> for CliError {
    fn from(e: starsim_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use starsim_core::Error;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Core(Error::InvalidParameter("x")).exit_code(), 2);
        assert_eq!(CliError::Core(Error::InvalidInput("x")).exit_code(), 2);
        assert_eq!(CliError::Core(Error::InsufficientData("x")).exit_code(), 2);
        assert_eq!(CliError::Core(Error::Capacity("x")).exit_code(), 3);
        assert_eq!(CliError::Core(Error::Internal("x")).exit_code(), 1);
        assert_eq!(CliError::Config("bad".into()).exit_code(), 2);
        assert_eq!(CliError::Usage("bad".into()).exit_code(), 2);
    }
}
