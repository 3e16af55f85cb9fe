//! Command-line front end of the robust waterfilling simulator.
//!
//! Exit codes are a stable contract: see [`Status`].

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub mod args;
pub mod commands;
pub mod config;
pub mod grid;

pub use args::Cli;
pub use commands::run;
pub use config::{ConfigError, RunConfig};

/// Process outcome, mapped one-to-one onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// 0: success; for `solve`, the iteration converged.
    Success,
    /// 1: malformed input, invalid parameters or I/O failure.
    InputError,
    /// 2: the iteration did not converge.
    NotConverged,
    /// 3: the uniqueness condition does not hold.
    ConditionFailed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::InputError => 1,
            Status::NotConverged => 2,
            Status::ConditionFailed => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] robustwf::Error),
}

impl CliError {
    pub fn status(&self) -> Status {
        match self {
            CliError::Model(robustwf::Error::NumericalFailure { .. }) => Status::NotConverged,
            _ => Status::InputError,
        }
    }
}
