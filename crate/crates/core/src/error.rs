use std::io;

/// Errors produced by mesh ingestion, operator assembly and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular control system (condition estimate {condition:.3e}) at control points {indices:?}")]
    SingularControls { indices: Vec<usize>, condition: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for failures that stem from malformed input data rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::InvalidMesh(_) | Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
