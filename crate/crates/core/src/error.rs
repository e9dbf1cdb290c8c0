use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MmmError>;

#[derive(Debug, Error)]
pub enum MmmError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric abort: {0}")]
    Numeric(String),
}

impl MmmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MmmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        MmmError::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            MmmError::MissingFile(_)
            | MmmError::Validation(_)
            | MmmError::Format { .. }
            | MmmError::Shape(_)
            | MmmError::InvalidArgument(_) => 2,
            MmmError::Numeric(_) => 3,
            MmmError::Io { .. } => 1,
        }
    }
}
