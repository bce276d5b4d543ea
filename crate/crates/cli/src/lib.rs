//! Library side of the `rfsq` command-line tool: method specs, the
//! benchmark sweep and the subcommand implementations.

pub mod bench;
pub mod commands;
pub mod method;

use std::fmt;
use std::io;

pub use method::{MethodSpec, SpecError};

/// Errors surfaced to the command line, grouped by exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Exit 1.
    Io(String),
    /// Exit 2: bad arguments, specs or parameters.
    Usage(String),
    /// Exit 3: malformed input files.
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Format(_) => 3,
        }
    }

    pub fn context(self, ctx: impl fmt::Display) -> Self {
        match self {
            CliError::Io(m) => CliError::Io(format!("{ctx}: {m}")),
            CliError::Usage(m) => CliError::Usage(format!("{ctx}: {m}")),
            CliError::Format(m) => CliError::Format(format!("{ctx}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Format(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rfsq::Error> for CliError {
    fn from(e: rfsq::Error) -> Self {
        match e {
            rfsq::Error::Io(io) => CliError::Io(io.to_string()),
            rfsq::Error::Format { .. } | rfsq::Error::UnsupportedVersion { .. } => CliError::Format(e.to_string()),
            rfsq::Error::Shape(_) | rfsq::Error::Parameter(_) | rfsq::Error::Value(_) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
