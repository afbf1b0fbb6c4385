use thiserror::Error;

/// Errors produced by the dynamics, simulation and stability routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("(A, B) is not stabilizable: mode {0} is unstable and uncontrollable")]
    NotStabilizable(String),

    #[error("Riccati solver failed: {0}")]
    Riccati(String),

    #[error("closed loop is not Hurwitz: spectral abscissa {0:e}")]
    NotHurwitz(f64),

    #[error("time {t} outside history coverage [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("spectral and time-domain analyses disagree: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
