use thiserror::Error;

use crate::graph::GraphError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("missing variance for latent `{0}`")]
    MissingVariance(String),
    #[error("variance must be positive (`{node}` = {value})")]
    NonPositiveVariance { node: String, value: f64 },
    #[error("scale must be positive (`{node}` = {value})")]
    NonPositiveScale { node: String, value: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("infeasible correlation targets: class `{class}` misses its target by {residual:.3e}")]
    Infeasible { class: String, residual: f64 },
    #[error("distance profile for `{removed}` is not increasing near {at:e}")]
    NonMonotoneDistance { removed: String, at: f64 },
    #[error("distance for `{removed}` saturates below {target}; cannot invert")]
    DistanceSaturated { removed: String, target: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
