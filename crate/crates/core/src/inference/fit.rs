use serde::{Deserialize, Serialize};

use super::data::LongitudinalDataset;
use super::mcmc::{adaptive_metropolis, batch_means_mcse, hessian_proposal, McmcOptions};
use super::model::{ModelSpec, ParameterVector, ResidualStructure};
use super::optimize::{map_fit_posterior, BfgsOptions, MapFit};
use super::posterior::Posterior;
use crate::corrmat;
use crate::error::Result;
use crate::linalg::quantile_sorted;
use crate::pcprior::{pair_label, PCPriorSpec};

/// Posterior summary of one natural-scale quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// 2.5% quantile.
    pub lower: f64,
    /// 97.5% quantile.
    pub upper: f64,
    pub mcse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Names of the unconstrained coordinates of `samples`.
    pub parameter_names: Vec<String>,
    pub map_point: ParameterVector,
    pub map_log_posterior: f64,
    pub map_converged: Option<bool>,
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub summaries: Vec<ParameterSummary>,
}

impl FitResult {
    pub fn summary(&self, name: &str) -> Option<&ParameterSummary> {
        self.summaries.iter().find(|s| s.name == name)
    }
}

/// Names of the natural-scale quantities reported for a model: fixed
/// effects, child scales, latent variances, one correlation per group of
/// child pairs with the same parents, and residual sds.
pub fn quantity_names(spec: &ModelSpec) -> Vec<String> {
    let mut names: Vec<String> = spec.layout().names()[..spec.layout().beta_len].to_vec();
    names.extend(spec.graph.children().iter().map(|c| format!("sigma_c[{c}]")));
    names.extend(spec.graph.latents().iter().map(|l| format!("q2[{l}]")));
    for g in spec.graph.pair_groups() {
        let (a, b) = g.pairs[0];
        names.push(pair_label(&spec.graph.children()[a], &spec.graph.children()[b]));
    }
    match spec.residual {
        ResidualStructure::PerMarker => {
            names.extend(spec.markers.iter().map(|m| format!("sigma_eps[{}]", m.name)))
        }
        ResidualStructure::Shared => names.push("sigma_eps".into()),
    }
    names
}

/// Values of [`quantity_names`] at `p`.
pub fn quantities(spec: &ModelSpec, p: &ParameterVector) -> Vec<f64> {
    let q2 = p.q2();
    let c = corrmat::oracle_values(&spec.graph, &q2);
    let mut out = p.beta.clone();
    out.extend(p.sigma_c());
    out.extend(q2);
    out.extend(spec.graph.pair_groups().iter().map(|g| c[g.pairs[0]]));
    out.extend(p.sigma_eps());
    out
}

pub fn summarize(spec: &ModelSpec, samples: &[Vec<f64>]) -> Result<Vec<ParameterSummary>> {
    let layout = spec.layout();
    let names = quantity_names(spec);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(samples.len()); names.len()];
    for s in samples {
        for (col, v) in cols.iter_mut().zip(quantities(spec, &layout.split(s)?)) {
            col.push(v);
        }
    }
    Ok(names
        .into_iter()
        .zip(cols)
        .map(|(name, col)| {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            let mcse = batch_means_mcse(&col);
            let mut sorted = col;
            sorted.sort_by(f64::total_cmp);
            ParameterSummary {
                name,
                mean,
                sd,
                lower: quantile_sorted(&sorted, 0.025),
                upper: quantile_sorted(&sorted, 0.975),
                mcse,
            }
        })
        .collect())
}

/// Adaptive Metropolis from `start` with an initial proposal built from the
/// curvature at `start`.
pub fn mh_sample_posterior(post: &Posterior, start: &ParameterVector, opts: &McmcOptions) -> Result<FitResult> {
    let log_f = |x: &[f64]| post.log_density(x);
    let x0 = start.to_vec();
    let start_lp = post.log_posterior(start)?;
    let cov = hessian_proposal(&log_f, &x0);
    let chain = adaptive_metropolis(&log_f, &x0, &cov, opts)?;
    let summaries = summarize(post.spec(), &chain.samples)?;
    Ok(FitResult {
        parameter_names: post.layout().names().to_vec(),
        map_point: start.clone(),
        map_log_posterior: start_lp,
        map_converged: None,
        samples: chain.samples,
        n_iter: opts.n_iter,
        burn_in: chain.burn_in,
        seed: opts.seed,
        acceptance_rate: chain.acceptance_rate,
        summaries,
    })
}

pub fn mh_sample(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    prior: &PCPriorSpec,
    start: &ParameterVector,
    n_iter: usize,
    seed: u64,
) -> Result<FitResult> {
    let post = Posterior::new(data, spec, prior)?;
    mh_sample_posterior(
        &post,
        start,
        &McmcOptions {
            n_iter,
            seed,
            ..McmcOptions::default()
        },
    )
}

/// MAP fit followed by MCMC started at the mode.
pub fn fit_model(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    prior: &PCPriorSpec,
    opts: &McmcOptions,
) -> Result<(MapFit, FitResult)> {
    let post = Posterior::new(data, spec, prior)?;
    let init = post.default_init(data)?;
    let map = map_fit_posterior(&post, &init, &BfgsOptions::default())?;
    let mut fit = mh_sample_posterior(&post, &map.params, opts)?;
    fit.map_converged = Some(map.converged);
    Ok((map, fit))
}
