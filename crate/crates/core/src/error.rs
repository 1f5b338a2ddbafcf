use thiserror::Error;

/// Errors raised by game oracles, update maps and the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown game `{0}`")]
    UnknownGame(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite {what} at point {point:?}")]
    NonFinite { what: String, point: Vec<f64> },

    #[error("non-finite inner iterate at inner step {step} (point {point:?})")]
    NonFiniteInner { step: usize, point: Vec<f64> },

    #[error("singular H_vv block at point {point:?}")]
    SingularHessian { point: Vec<f64> },

    #[error("point {point:?} is not a fixed point of the update map (residual {residual:e})")]
    NotFixedPoint { point: Vec<f64>, residual: f64 },

    #[error("point {point:?} is not a critical point (gradient norm {grad_norm:e})")]
    NotCritical { point: Vec<f64>, grad_norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("empty sample set")]
    EmptySamples,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
