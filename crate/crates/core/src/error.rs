//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text input (manifest CSV, config); carries a 1-based line
    /// number when one is known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Malformed binary input (bag or model files).
    #[error("format error: {0}")]
    Format(String),

    /// Inconsistent or unsatisfiable configuration (bad fold count, class
    /// with too few slides, invalid hyperparameter).
    #[error("config error: {0}")]
    Config(String),

    /// Incompatible tensor shapes detected while building a compute graph.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite value produced at runtime; names the offending node or
    /// iteration so the failure can be located.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
