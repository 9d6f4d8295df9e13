use std::f64::consts::PI;

use serde::Serialize;

use super::data::LongitudinalDataset;
use super::likelihood::Likelihood;
use super::model::{ModelSpec, ParameterLayout, ParameterVector};
use crate::error::{Error, Result};
use crate::pcprior::{PCPriorSpec, Parametrization, SequentialPrior};

/// Standard deviation of the normal prior on each fixed effect.
pub const BETA_PRIOR_SD: f64 = 100.0;
/// Rate of the exponential prior on each standard deviation.
pub const SCALE_PRIOR_RATE: f64 = 1.0;

/// The additive pieces of the log posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorParts {
    pub loglik: f64,
    /// PC prior on `θ = log q²`, including the Jacobian.
    pub log_prior_theta: f64,
    /// Exponential priors on `σ_c` and `σ_ε`, on the log scale.
    pub log_prior_scales: f64,
    pub log_prior_beta: f64,
}

impl PosteriorParts {
    pub fn total(&self) -> f64 {
        self.loglik + self.log_prior_theta + self.log_prior_scales + self.log_prior_beta
    }
}

/// Log posterior on the unconstrained parameters.
#[derive(Debug, Clone)]
pub struct Posterior {
    likelihood: Likelihood,
    prior: SequentialPrior,
    layout: ParameterLayout,
}

impl Posterior {
    pub fn new(data: &LongitudinalDataset, spec: &ModelSpec, prior: &PCPriorSpec) -> Result<Self> {
        Ok(Self {
            likelihood: Likelihood::new(data, spec)?,
            prior: SequentialPrior::new(&spec.graph, prior)?,
            layout: spec.layout(),
        })
    }

    pub fn likelihood(&self) -> &Likelihood {
        &self.likelihood
    }

    pub fn spec(&self) -> &ModelSpec {
        self.likelihood.spec()
    }

    pub fn prior(&self) -> &SequentialPrior {
        &self.prior
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn parts(&self, p: &ParameterVector) -> Result<PosteriorParts> {
        self.layout.check(p)?;
        if !p.beta.iter().chain(&p.theta).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("fixed effects and log variances must be finite".into()));
        }
        let log_prior_theta = self.prior.log_density(&p.q2(), Parametrization::LogVariance)?;
        let log_prior_scales = p
            .log_sigma_c
            .iter()
            .chain(&p.log_sigma_eps)
            .map(|&l| log_exp_prior_on_log_scale(l))
            .sum();
        let log_prior_beta = p.beta.iter().map(|&b| log_normal(b, BETA_PRIOR_SD)).sum();
        Ok(PosteriorParts {
            loglik: self.likelihood.loglik(p)?,
            log_prior_theta,
            log_prior_scales,
            log_prior_beta,
        })
    }

    pub fn log_posterior(&self, p: &ParameterVector) -> Result<f64> {
        Ok(self.parts(p)?.total())
    }

    /// Log posterior at a flat unconstrained vector.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.log_posterior(&self.layout.split(x)?)
    }

    /// Starting point: per-marker least squares for `β`, zeros elsewhere.
    pub fn default_init(&self, data: &LongitudinalDataset) -> Result<ParameterVector> {
        let mut p = ParameterVector::zeros(&self.layout);
        p.beta = self.likelihood.ols_beta(data)?;
        Ok(p)
    }
}

/// Exponential(rate) density of `σ = e^l` times the Jacobian `σ`.
fn log_exp_prior_on_log_scale(l: f64) -> f64 {
    let sigma = l.exp();
    SCALE_PRIOR_RATE.ln() - SCALE_PRIOR_RATE * sigma + l
}

fn log_normal(x: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI * sd * sd).ln() - 0.5 * (x / sd).powi(2)
}

/// Log posterior of `params` given `data`.
pub fn log_posterior(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    params: &ParameterVector,
    prior: &PCPriorSpec,
) -> Result<f64> {
    Posterior::new(data, spec, prior)?.log_posterior(params)
}
