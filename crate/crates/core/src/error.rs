use crate::dyson::DysonSolution;

/// Errors raised by the solver, density and ensemble layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance operator is zero on the positive cone")]
    ZeroOperator,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("Dyson iteration did not converge at eta = {eta:.3e} (best residual {residual:.3e})")]
    DysonNotConverged {
        eta: f64,
        residual: f64,
        best: Box<DysonSolution>,
    },

    #[error("eta continuation stalled at eta = {last_eta:.3e} (residual {residual:.3e})")]
    ContinuationStall { last_eta: f64, residual: f64 },

    #[error("tau = {tau} is within the edge margin {margin:.3e} of the spectral radius {rho}")]
    EdgeProximity { tau: f64, rho: f64, margin: f64 },

    #[error("tau = {tau} is not outside the spectrum (rho = {rho}, margin {margin:.3e})")]
    InsideBulk { tau: f64, rho: f64, margin: f64 },

    #[error("positive definiteness lost: {0}")]
    NotPositiveDefinite(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("linear solver stagnated at residual {residual:.3e} after {iterations} iterations")]
    SolverStagnation { residual: f64, iterations: usize },

    #[error("edge cubic has no positive root (nearest real root {nearest:.3e})")]
    NoPositiveRoot { nearest: f64 },

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
