use thiserror::Error;

/// Errors surfaced by construction, scoring, fitting, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input value violates a documented invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two inputs that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A sampler or optimizer could not proceed (e.g. non-finite density).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A malformed record in an input file; carries the 1-based row number.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
