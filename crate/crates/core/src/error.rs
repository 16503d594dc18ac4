use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed text input (bvals/bvecs, label lists).
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid gradient scheme: {0}")]
    Scheme(String),
    #[error("nifti: {0}")]
    Nifti(String),
    /// Values that cannot be processed (NaN, infinities).
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The least-squares problem cannot support corrected residuals.
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    InputFormat,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::Usage,
            Error::Degenerate(_) => ErrorKind::Numerical,
            Error::Parse(_)
            | Error::Scheme(_)
            | Error::Nifti(_)
            | Error::InvalidData(_)
            | Error::Dimension(_)
            | Error::Io(_) => ErrorKind::InputFormat,
        }
    }
}
