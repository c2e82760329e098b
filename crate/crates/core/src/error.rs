use std::fmt;
use std::path::PathBuf;

/// A single offending field reported by configuration validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no observations")]
    NoObservations,

    #[error("insufficient samples for KS: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {left} vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid configuration: {}", join_fields(.0))]
    Config(Vec<FieldError>),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
