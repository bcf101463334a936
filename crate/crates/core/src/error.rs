use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    DatasetParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation error at {path}:{line}: {message}")]
    DatasetValidation {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid task descriptor: {0}")]
    InvalidTask(String),

    #[error("no successful transitions for option `{0}`")]
    NoSuccessfulTransitions(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ppddl parse error at {line}:{col}: expected {expected}, found {found}")]
    PpddlParse {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },

    #[error("no grounded operator for option `{option_id}` with egocentric partition {ego_label}")]
    MissingOperator { option_id: String, ego_label: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
