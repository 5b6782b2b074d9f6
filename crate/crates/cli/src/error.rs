//! CLI error taxonomy mapped onto process exit codes.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Config or input validation failure (exit 1).
    Validation(String),
    /// Runtime or infeasibility failure (exit 2).
    Runtime(String),
    /// A verification subcommand's internal assertion failed (exit 3).
    Assertion(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> CliError {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> CliError {
        CliError::Runtime(msg.into())
    }

    pub fn assertion(msg: impl Into<String>) -> CliError {
        CliError::Assertion(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Assertion(m) => write!(f, "assertion failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}
