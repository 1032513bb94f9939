use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

/// Failures of a command, each mapped to one process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: optctrl::Error,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Core(#[from] optctrl::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn input(path: impl Into<PathBuf>, source: optctrl::Error) -> Self {
        Self::Input {
            path: path.into(),
            source,
        }
    }

    /// 2 usage, 3 input or output, 4 numerical.
    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            Self::Usage(_) => 2,
            Self::Input { .. } | Self::Invalid(_) | Self::Io { .. } => 3,
            Self::Core(e) if e.is_input_error() => 3,
            Self::Core(optctrl::Error::InvalidArgument(_)) => 2,
            Self::Core(_) => 4,
        };
        ExitCode::from(code)
    }
}

pub type CliResult<T> = Result<T, CliError>;
