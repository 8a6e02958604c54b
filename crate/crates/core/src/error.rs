use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid loss value: {0}")]
    InvalidLoss(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no prediction dominates the mixture (gap {gap:e})")]
    SubstitutionFailure { gap: f64 },

    #[error("c * g is not a superprediction (gap {gap:e})")]
    NotRealizable { gap: f64 },

    #[error("proper loss has no continuous extension at boundary point {point:?}")]
    NonExtendable { point: Vec<f64> },

    #[error("solver contract violated: {0}")]
    ContractViolation(String),

    #[error("solver stalled at max q = {value} above the allowed {allowed}")]
    SlackExceeded { value: f64, allowed: f64, best: Vec<f64> },

    #[error("fixed point iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("precondition could not be verified: {0}")]
    PreconditionUnverified(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
