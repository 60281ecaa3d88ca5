//! Command-line front end for the qrabi toolkit.

pub mod commands;
pub mod config;
pub mod validate;

use std::fmt;

pub use config::{ConfigError, RunConfig};

/// Failure classes that map onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, bad input file or unusable output path (exit 2).
    Input(String),
    /// A numerical routine failed (exit 3).
    Numerical(String),
    /// The validation suite found a failing check (exit 1).
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::ValidationFailed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::ValidationFailed(n) => write!(f, "validation failed: {n} check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<qrabi::Error> for CliError {
    fn from(e: qrabi::Error) -> Self {
        use qrabi::Error as E;
        match e {
            E::InvalidParameter(_) | E::InvalidInput(_) | E::Parse { .. } | E::Io(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
