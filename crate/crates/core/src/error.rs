use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unknown objective id `{0}`")]
    UnknownObjective(String),

    #[error("invalid quadrature spec: {0}")]
    InvalidQuadrature(String),

    #[error("curve quadrature needs at least {required} nodes for k={k}, n={n}; got {given}")]
    InsufficientCurveNodes {
        required: usize,
        given: usize,
        k: u32,
        n: usize,
    },

    #[error("coordinate {index} = {value} lies outside [0, 1]")]
    OutsideUnitCube { index: usize, value: f64 },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("state diverged at t = {t} (|component| > {limit:e})")]
    Divergence { t: f64, limit: f64 },

    #[error("averaged flow left its admissible set at t = {t} (|x| > {radius})")]
    AveragedFlowEscape { t: f64, radius: f64 },

    #[error("node budget exceeded: {0}")]
    NodeBudget(String),

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}
