use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("parse error (line {line}): {msg}")]
    Parse { line: usize, msg: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 1,
            Error::Parse { .. } | Error::Io(_) | Error::Shape(_) | Error::Index(_) => 2,
            Error::Domain(_)
            | Error::NotPositiveDefinite(_)
            | Error::Degenerate(_)
            | Error::NonConvergence(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
