use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FedError>;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("config file not found: {0}")]
    ConfigNotFound(PathBuf),

    #[error("config value out of range: {key} = {value} ({reason})")]
    ConfigRange { key: String, value: String, reason: String },

    #[error("unknown config key `{0}`")]
    ConfigUnknownKey(String),

    #[error("malformed config: {0}")]
    ConfigSyntax(String),

    #[error("{file}:{line}: {message}")]
    DataFormat { file: String, line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("degenerate prototype: {0}")]
    DegeneratePrototype(String),

    #[error("empty training set: {0}")]
    EmptyTrainSet(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FedError {
    /// Stable machine-readable code reported by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            FedError::ConfigNotFound(_) => "CONFIG_NOT_FOUND",
            FedError::ConfigRange { .. } => "CONFIG_RANGE",
            FedError::ConfigUnknownKey(_) => "CONFIG_UNKNOWN_KEY",
            FedError::ConfigSyntax(_) => "CONFIG_SYNTAX",
            FedError::DataFormat { .. } => "DATA_FORMAT",
            FedError::Dimension(_) => "DIMENSION",
            FedError::InvalidArgument(_) => "INVALID_ARGUMENT",
            FedError::Diverged(_) => "DIVERGED",
            FedError::DegeneratePrototype(_) => "DEGENERATE_PROTOTYPE",
            FedError::EmptyTrainSet(_) => "EMPTY_TRAIN_SET",
            FedError::ArchitectureMismatch(_) => "ARCHITECTURE_MISMATCH",
            FedError::Io { .. } => "IO",
        }
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            FedError::ConfigNotFound(_)
                | FedError::ConfigRange { .. }
                | FedError::ConfigUnknownKey(_)
                | FedError::ConfigSyntax(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FedError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        FedError::DataFormat {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// Attach round/client context to a numeric failure.
    pub fn in_context(self, context: &str) -> Self {
        match self {
            FedError::Diverged(m) => FedError::Diverged(format!("{context}: {m}")),
            FedError::DegeneratePrototype(m) => FedError::DegeneratePrototype(format!("{context}: {m}")),
            FedError::EmptyTrainSet(m) => FedError::EmptyTrainSet(format!("{context}: {m}")),
            other => other,
        }
    }
}
