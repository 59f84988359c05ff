// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the control toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed numeric input (NaN entries, impure states, bad traces).
    #[error("invalid input: {0}")]
    Input(String),
    /// Inconsistent configuration (channel counts, class sets, grids).
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    /// A structural property (hermiticity, unitarity) does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
