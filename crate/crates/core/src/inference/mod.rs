//! Gaussian multivariate longitudinal models whose random-effect correlation
//! comes from a latent tree: exact marginal likelihood, posterior under the
//! sequential PC prior, MAP fitting, adaptive Metropolis and simulation.

pub mod data;
pub mod fit;
pub mod likelihood;
pub mod mcmc;
pub mod model;
pub mod optimize;
pub mod posterior;
pub mod report;
pub mod scenario;
pub mod simulate;

pub use data::{Individual, LongitudinalDataset, Observation};
pub use fit::{fit_model, mh_sample, mh_sample_posterior, quantity_names, FitResult, ParameterSummary};
pub use likelihood::{marginal_loglik, Likelihood, NaturalParameters};
pub use mcmc::{adaptive_metropolis, batch_means_mcse, Chain, McmcOptions};
pub use model::{Covariate, MarkerSpec, ModelSpec, ParameterLayout, ParameterVector, ResidualStructure};
pub use optimize::{bfgs_minimize, map_fit, map_fit_posterior, BfgsOptions, MapFit};
pub use posterior::{log_posterior, Posterior, PosteriorParts};
pub use report::{recovery_report, RecoveryReport, RecoveryRow};
pub use scenario::Scenario;
pub use simulate::{complete_truths, resolve_truths, simulate_dataset, SimulatedData, Truths};
