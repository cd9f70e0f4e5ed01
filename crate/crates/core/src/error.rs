use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A record violates the observed-data pattern. `row` is the 0-based
    /// data row index.
    #[error("row {row}: {reason}")]
    StructuralViolation { row: usize, reason: String },

    #[error("stratum S={stratum} is empty")]
    EmptyStratum { stratum: u8 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    /// Failure of a nuisance fit, tagged with the nuisance name.
    #[error("fitting {nuisance}: {source}")]
    Nuisance {
        nuisance: &'static str,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("enumeration over {support} support points exceeds the cap of {cap}")]
    EnumerationInfeasible { support: usize, cap: usize },

    #[error("unsupported export format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_nuisance(self, nuisance: &'static str) -> Self {
        Error::Nuisance {
            nuisance,
            source: alloc::boxed::Box::new(self),
        }
    }

    /// True for errors caused by malformed or inconsistent input data, as
    /// opposed to numerical breakdowns.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Numerical(_) => false,
            Error::Nuisance { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
