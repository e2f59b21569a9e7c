use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step width {0} outside the admissible range (0, 0.25]")]
    StepOutOfRange(f64),

    #[error("zeta3 radicand {0:e} is negative beyond roundoff")]
    NegativeRadicand(f64),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid target: {0}")]
    Target(String),

    #[error("reverse time {t} is not in [0, {horizon})")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("score field is not affine at t = {0}")]
    NotAffine(f64),

    #[error("covariance is singular or not positive definite")]
    Singular,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
