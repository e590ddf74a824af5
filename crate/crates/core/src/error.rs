use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("signal too short: need at least {needed} samples, got {got}")]
    LengthTooShort { needed: usize, got: usize },
    #[error("sampling interval {dt} exceeds the required {required}")]
    RateTooLow { dt: f64, required: f64 },
    #[error("threshold λ = {lambda} is below 4ζ·e = {bound}")]
    ThresholdTooSmall { lambda: f64, bound: f64 },
    #[error("no q in {{0, 1}} satisfies the fold identity at index {index}")]
    DecompositionFailed { index: usize },
    #[error("shifted normal system is ill-conditioned (condition estimate {condition:.3e})")]
    NumericalFailure { condition: f64 },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("unknown denoiser `{0}`")]
    UnknownDenoiser(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
