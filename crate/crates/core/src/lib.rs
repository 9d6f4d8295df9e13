//! Correlation matrices built from rooted latent trees, the sequential
//! penalized-complexity prior over the latent variances, and Gaussian mixed
//! models whose random-effect correlation comes from such a tree.

pub mod corrmat;
pub mod error;
pub mod format;
pub mod graph;
pub mod inference;
pub mod linalg;
pub mod pcprior;

pub use corrmat::{
    assemble_precision, children_correlation, correlation_oracle, scale_to_covariance,
    solve_variances, ChildScales, CorrelationMatrix, CorrelationTarget, PrecisionMatrix,
    VarianceAssignment,
};
pub use error::{Error, Result};
pub use graph::{
    parse_graph, CorrelationClass, GraphError, ModelSequence, NodeId, PairGroup, SequenceModel,
    TreeGraph, Violation,
};
pub use pcprior::{
    calibrate_lambda, fisher_at_base, joint_log_prior, kld_gaussian, sample_prior, sample_prior_draws,
    step_distance, step_log_density, CalibrationTable, DensityMode, PCPriorSpec,
    Parametrization, PriorDensityValue, PriorDraw, SequentialPrior, StepProfile,
};
