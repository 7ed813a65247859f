use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("unstable discretization: {0}")]
    Stability(String),
    #[error("near-defective eigenbasis (condition {cond:.3e}) near eigenvalues {cluster}")]
    NearDefective { cond: f64, cluster: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("size selection failed: {0}")]
    SizeSelection(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes used to map failures onto process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    SizeSelection,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_) | Error::Config(_) | Error::Stability(_) | Error::Parse(_) | Error::Io(_) => {
                ErrorClass::Config
            }
            Error::NonFinite(_) | Error::NearDefective { .. } | Error::Numerical(_) => ErrorClass::Numerical,
            Error::SizeSelection(_) => ErrorClass::SizeSelection,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
