//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI maps them to exit codes: invalid
//! configuration is a usage problem, unreadable/ill-formed data is a data
//! problem, and non-finite values or solver breakdown are numerical
//! failures.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its documented domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Incompatible shapes between data, parameters, or systems.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A data column has zero range, so it cannot be normalized.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A text input (CSV, model file, config file) could not be parsed.
    /// `line` is 1-based; 0 means the location is not line-addressable.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// NaN or infinity showed up where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The solver could not produce a usable solution.
    #[error("solver failure: {0}")]
    SolverFailure(String),
}

impl Error {
    /// Attach the offending path to an I/O failure.
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
