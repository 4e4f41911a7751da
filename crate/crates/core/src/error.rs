//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field shape ({got_rows}, {got_cols}) does not match curve shape ({want_rows}, {want_cols})")]
    ShapeMismatch {
        want_rows: usize,
        want_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("immersion violated: min |c'| = {min_speed:.3e} < threshold {threshold:.3e}")]
    ImmersionViolation { min_speed: f64, threshold: f64 },

    #[error("non-finite entry encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("grid too small: M = {m}, need M >= 16 and M even")]
    InvalidGrid { m: usize },

    #[error("ambient dimension {dim} too small, need dim >= 2")]
    InvalidDimension { dim: usize },

    #[error("derivative order {k} exceeds supported maximum {max}")]
    DerivativeOrder { k: usize, max: usize },

    #[error("invalid norm order {n}; Sobolev norms require n >= 1")]
    InvalidNormOrder { n: usize },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("winding numbers differ: {left} vs {right}; curves lie in different connected components")]
    WindingMismatch { left: i64, right: i64 },

    #[error("winding number under-resolved: {reason}")]
    WindingUnresolved { reason: String },

    #[error("operation requires plane curves (dim = 2), got dim = {dim}")]
    NotPlanar { dim: usize },

    #[error("reparametrization not strictly monotone: margin {margin:.3e} < {required:.3e}")]
    MonotonicityViolation { margin: f64, required: f64 },

    #[error("interior knot {knot} lost immersion at iteration {iteration}; raise the number of knots or samples")]
    ImmersionLostAtKnot { knot: usize, iteration: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
}
