//! Unified error type for the workspace.
//!
//! Variants are grouped by how a caller should react: configuration problems
//! are user-fixable, schema problems point at a file location, numeric
//! problems mean the math left its contract, I/O problems carry the path.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A structural rule of the sparse wiring was violated.
    #[error("invalid wiring: {}", violations.join("; "))]
    InvalidWiring { violations: Vec<String> },

    /// A configuration value or argument combination is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input or intermediate value broke a numeric contract.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A data file did not match the expected schema.
    #[error("schema error in {path} at row {row}, column {column}: {message}")]
    Schema {
        path: String,
        /// 1-based line number, header included.
        row: usize,
        /// Column name, e.g. `t`, `p07`, `blocked`.
        column: String,
        message: String,
    },

    /// Synthetic trace generation could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),

    /// An underlying filesystem operation failed.
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an `std::io::Error` with the path it happened on.
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
