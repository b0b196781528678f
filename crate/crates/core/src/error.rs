use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VipError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VipError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("missing tensor `{0}` in weight container")]
    MissingTensor(String),

    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("malformed weight container: {0}")]
    Format(String),

    #[error("undefined result: {0}")]
    UndefinedResult(String),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("preprocessing failed: {0}")]
    Preprocess(String),

    #[error("dataset at {0} contains no images")]
    EmptyDataset(PathBuf),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl VipError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        VipError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VipError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error came out of weight loading (missing tensor or shape mismatch).
    pub fn is_load_error(&self) -> bool {
        matches!(
            self,
            VipError::MissingTensor(_) | VipError::ShapeMismatch { .. }
        )
    }
}
