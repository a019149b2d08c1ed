use thiserror::Error;

/// Errors raised by the library. Parameter and domain problems are kept
/// apart from numerical breakdowns so front ends can map them to different
/// exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate recurrence at k = {k}: beta_k = {value:e}")]
    Degenerate { k: usize, value: f64 },
    #[error("conditioning failure: {0}")]
    Conditioning(String),
    #[error("structural check failed: {0}")]
    Internal(String),
    #[error("enumeration too large: {0} configurations")]
    TooLarge(u128),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for errors caused by bad user input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_) | Error::Domain(_) | Error::Unsupported(_) | Error::TooLarge(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
