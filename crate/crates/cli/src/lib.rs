//! Command-line pipeline tying data preparation, training, evaluation and
//! grid comparison together. See the `s2srank` binary.

pub mod commands;
pub mod config;

use std::fmt;

/// Error with the process exit code it maps to: 2 for usage/config problems,
/// 3 for runtime and numeric failures.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<s2srank_core::Error> for CliError {
    fn from(e: s2srank_core::Error) -> Self {
        use s2srank_core::Error as E;
        let code = match &e {
            E::Parse { .. } | E::EmptyDataset(_) | E::Config(_) => 2,
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        let code = if e.kind() == std::io::ErrorKind::NotFound { 2 } else { 3 };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}
