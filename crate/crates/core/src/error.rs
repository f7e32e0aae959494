use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed model file, PGM, or other serialized artifact.
    #[error("format error: {0}")]
    Format(String),

    /// A structurally well-formed artifact violates a semantic invariant.
    #[error("validation error{}: {message}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Validation {
        layer: Option<usize>,
        message: String,
    },

    /// Caller supplied inputs that do not satisfy an operation's preconditions.
    #[error("input error: {0}")]
    Input(String),

    /// A computation became numerically ill-defined.
    #[error("numerical error at layer {layer}: {message}")]
    Numerical { layer: usize, message: String },

    /// A metric has no defined value for the given data.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn validation(layer: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Validation {
            layer,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for numerical
    /// failures, 1 for everything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } | Error::UndefinedMetric(_) => 2,
            _ => 1,
        }
    }
}
