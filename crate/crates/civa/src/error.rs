use thiserror::Error;

/// Errors produced by the separation toolkit.
#[derive(Debug, Error)]
pub enum CivaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("datasets must be centered before building the covariance cache")]
    NotCentered,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("row {row} of demixing matrix {dataset} is not unit norm (norm {norm})")]
    NonUnitRow { dataset: usize, row: usize, norm: f64 },

    #[error("SCV covariance {component} is singular even after diagonal loading")]
    IllConditionedModel { component: usize },

    #[error("degenerate demixing matrix: {0}")]
    DegenerateDemixing(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("matrix format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CivaError> = std::result::Result<T, E>;
