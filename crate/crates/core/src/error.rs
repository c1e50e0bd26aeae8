use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("iteration collapsed to the zero profile")]
    Collapse,

    #[error("interpolation would extrapolate: radius {radius} beyond profile end {r_max}")]
    Extrapolation { radius: f64, r_max: f64 },

    #[error("dense size {dim} exceeds cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("eigenfunction for lambda = {lambda} has no definite x-parity (score {score:.3e})")]
    AmbiguousParity { lambda: f64, score: f64 },

    #[error("solution blew up at t = {t} (sup norm {sup})")]
    BlowUp { t: f64, sup: f64 },

    #[error("time step {dt} exceeds stability bound {bound}")]
    TimeStep { dt: f64, bound: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
