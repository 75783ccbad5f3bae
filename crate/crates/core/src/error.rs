use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("unsupported tensor order {order} (allowed {min}..={max})")]
    OrderUnsupported { order: usize, min: usize, max: usize },

    #[error("dimension mismatch: expected n = {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is numerically singular (condition estimate {cond_estimate:e})")]
    Singular { cond_estimate: f64 },

    #[error("fundamental matrix ill-conditioned at t = {t} (condition estimate {cond_estimate:e})")]
    IllConditioned { t: f64, cond_estimate: f64 },

    #[error("solution left the admissible region after t = {t_last}; escape time ≈ {escape_time}")]
    BlowUp { t_last: f64, escape_time: f64 },

    #[error("denominator vanishes (|γᵀx + δ| = {denominator:e})")]
    Pole { denominator: f64 },

    #[error("lift denominator crosses zero between t = {t_lo} and t = {t_hi} (pole ≈ {t_pole})")]
    PoleCrossed { t_lo: f64, t_hi: f64, t_pole: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid system document: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
