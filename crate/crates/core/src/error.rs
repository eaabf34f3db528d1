//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem problem reading or writing a file. The cause is carried
    /// as the error source rather than in the message, so chains printed by
    /// callers do not repeat it.
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed cell or row in a delimited input file.
    #[error("{path}: line {line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Input data violates a structural requirement (gaps, duplicates,
    /// too-short series, empty proxy network, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A run configuration that cannot be executed.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A parameter value outside the support of its prior.
    #[error("parameter {name} out of support (value {value})")]
    OutOfSupport { name: &'static str, value: f64 },

    /// A density or update produced a non-finite value during sampling.
    #[error("non-finite value in sampler at iteration {iteration}, block {block}")]
    Numerical { iteration: usize, block: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
