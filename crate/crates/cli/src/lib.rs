// SPDX-License-Identifier: Apache-2.0

//! Library half of the `urc` command-line tool: configuration, result
//! persistence and the verb implementations.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or input files; nothing has been computed.
    #[error("configuration error: {0}")]
    Config(String),
    /// A computation produced no usable result.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<urc_core::Error> for CliError {
    fn from(e: urc_core::Error) -> Self {
        use urc_core::Error as E;
        match e {
            E::NonFinite(_) | E::Invariant(_) => CliError::Numeric(e.to_string()),
            E::Config(msg) => CliError::Config(msg),
            _ => CliError::Config(e.to_string()),
        }
    }
}
