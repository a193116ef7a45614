use thiserror::Error;

/// Errors raised by region evaluation, channel construction and the
/// finite-alphabet machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A distortion sits below its single-branch floor, so the query is
    /// outside the region for trivial reasons.
    #[error("infeasible distortion {name} = {value:e}: floor is {floor:e}")]
    InfeasibleDistortion {
        name: &'static str,
        value: f64,
        floor: f64,
    },

    #[error("negative excess term Delta = {0:e} for feasible input")]
    NegativeDelta(f64),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("regime thresholds cross: low = {low:e}, harmonic = {harmonic:e}")]
    InvalidRegimeInput { low: f64, harmonic: f64 },

    #[error("singular observation block: smallest eigenvalue {min_eigenvalue:e} <= {threshold:e}")]
    SingularObservation { min_eigenvalue: f64, threshold: f64 },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
