use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] transport_tmle_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}, line {line}: cannot parse `{cell}` in column `{column}`")]
    Cell {
        path: PathBuf,
        line: u64,
        column: String,
        cell: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("configuration: {0}")]
    Config(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code: numerical breakdowns exit with 3, everything
    /// else the user can fix by changing the input exits with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if !e.is_validation() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }
}
