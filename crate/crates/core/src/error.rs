use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error("linear solve failed at t = {t}: {reason}")]
    StepFailed { t: f64, reason: String },

    #[error("declared bound on {signal} exceeded at t = {t}: |{value}| > {bound}")]
    BoundExceeded {
        signal: &'static str,
        t: f64,
        value: f64,
        bound: f64,
    },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("no certificate: mu_m = {0} is not positive")]
    NoCertificate(f64),

    #[error("trajectory must be recorded with stride 1 (got {0})")]
    StrideNotOne(usize),
}
