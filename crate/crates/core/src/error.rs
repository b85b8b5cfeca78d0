use thiserror::Error;

use crate::expr::ExprError;

/// Errors produced by the toolkit.
///
/// Variants are split between malformed input (see [`Error::is_input_error`])
/// and numerical or invariant failures detected while computing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value {value} at {location}")]
    NonFinite { location: String, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("unknown sample id `{0}`")]
    UnknownId(String),

    #[error("net is not verified against the given vectors")]
    UnverifiedNet,

    #[error("invalid mean: {0}")]
    InvalidMean(String),

    #[error("value {value} exceeds the declared bound {bound} at {location}")]
    BoundExceeded { location: String, value: f64, bound: f64 },

    #[error(
        "semigroup defect invariant violated: defect {defect:e} exceeds tolerance {tolerance:e} at pair ({s}, {s_prime})"
    )]
    SemigroupDefect {
        defect: f64,
        tolerance: f64,
        s: String,
        s_prime: String,
    },

    #[error("no sample point within radius {radius} of {point}")]
    NoSamples { point: f64, radius: f64 },

    #[error("time {time} is outside the semigroup domain (0, {t_max}]")]
    TimeOutOfRange { time: f64, t_max: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input, as opposed
    /// to numerical failures or violated invariants.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::InvalidInput(_)
                | Error::Expr(_)
                | Error::UnknownId(_)
                | Error::InvalidMean(_)
                | Error::Json(_)
                | Error::TimeOutOfRange { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
