use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("branch error: {0}")]
    Branch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric failure in {term}: {detail}")]
    Numeric { term: String, detail: String },

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn numeric(term: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            term: term.into(),
            detail: detail.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
