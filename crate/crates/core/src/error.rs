//! Crate-wide error type and the exit-code mapping used by the CLI.

use std::path::PathBuf;

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem failures, annotated with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Invalid configuration values (hyperparameters, rule sets, paths).
    #[error("config error: {0}")]
    Config(String),

    /// Structural problems in input files: missing columns, malformed rows,
    /// mismatched label sets, unexpected file versions.
    #[error("schema error: {0}")]
    Schema(String),

    /// Content-level problems: unknown labels, empty corpora, corrupt
    /// checkpoint payloads.
    #[error("data error: {0}")]
    Data(String),

    /// NaN/Inf encountered, or an operation evaluated outside its numeric
    /// domain (e.g. softmax over a fully-masked row).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Tensor shape disagreement.
    #[error("dimension error: {0}")]
    Dim(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config/schema, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Config(_) | Error::Schema(_) | Error::Dim(_) => 2,
            Error::Data(_) => 3,
            Error::Numeric(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
