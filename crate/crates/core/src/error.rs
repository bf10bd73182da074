use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate system: {0}")]
    DegenerateSystem(String),

    #[error("spatial index has no measured points")]
    EmptyIndex,

    #[error("input has no measurements")]
    EmptyInput,

    #[error("evaluation mask selects no pixels")]
    EmptyMask,

    #[error("invalid scene specification: {0}")]
    Scene(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-friendly tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Value(_) => "value",
            Error::Range(_) => "range",
            Error::Dimension(_) => "dimension",
            Error::DegenerateSystem(_) => "degenerate_system",
            Error::EmptyIndex => "empty_index",
            Error::EmptyInput => "empty_input",
            Error::EmptyMask => "empty_mask",
            Error::Scene(_) => "scene",
            Error::Config(_) => "config",
        }
    }
}
