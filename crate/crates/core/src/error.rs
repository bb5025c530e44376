use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input text could not be parsed at all.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// Input parsed but violates an invariant. `path` names the offending field.
    #[error("invalid {path}: {message}")]
    Validation { path: String, message: String },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("corpus has {available} trajectories but {requested} anchors were requested")]
    CorpusTooSmall { available: usize, requested: usize },

    #[error("horizon mismatch: expected {expected} steps, got {actual}")]
    HorizonMismatch { expected: usize, actual: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("need at least {needed} candidates, got {available}")]
    TooFewCandidates { needed: usize, available: usize },

    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),

    #[error("missing expert trajectory in scenario {0:?}")]
    MissingExpert(String),

    #[error("planner failed at step {step}: {source}")]
    Planner {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than by a failure while running.
    pub fn is_invalid_input(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::LengthMismatch { .. }
            | Error::CorpusTooSmall { .. }
            | Error::HorizonMismatch { .. }
            | Error::Empty(_)
            | Error::TooFewCandidates { .. }
            | Error::Infeasible(_)
            | Error::MissingExpert(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Planner { .. } => false,
        }
    }
}
