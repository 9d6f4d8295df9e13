//! Adaptive random-walk Metropolis.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::optimize::fd_hessian;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    pub n_iter: usize,
    /// Leading share of the iterations used for adaptation and discarded.
    pub burn_fraction: f64,
    pub target_acceptance: f64,
    pub seed: u64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            n_iter: 5000,
            burn_fraction: 0.4,
            target_acceptance: 0.234,
            seed: 0,
        }
    }
}

/// Retained draws of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    /// Acceptance rate over the retained iterations.
    pub acceptance_rate: f64,
    pub burn_in: usize,
}

/// `2.38²/d` times the inverse of the Hessian of `−log f` at `x`; falls back
/// to a diagonal built from the positive curvatures.
pub fn hessian_proposal<F>(log_f: &F, x: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let neg = |p: &[f64]| match log_f(p) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::NAN,
    };
    let d = x.len();
    let scale = 2.38 * 2.38 / d as f64;
    let mut h = fd_hessian(&neg, x, 1e-4);
    if h.iter().all(|v| v.is_finite()) {
        crate::linalg::symmetrize(&mut h);
        if let Some(c) = h.clone().cholesky() {
            return c.inverse() * scale;
        }
    }
    DMatrix::from_fn(d, d, |i, j| {
        if i != j {
            0.0
        } else if h[(i, i)].is_finite() && h[(i, i)] > 0.0 {
            scale / h[(i, i)]
        } else {
            scale * 0.01
        }
    })
}

fn factor(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut c = cov.clone();
    crate::linalg::symmetrize(&mut c);
    let eps = 1e-12 * c.diagonal().amax().max(1e-300);
    for i in 0..c.nrows() {
        c[(i, i)] += eps;
    }
    c.cholesky().map(|ch| ch.l())
}

/// Runs the chain from `start`. During the burn-in the proposal scale
/// follows a Robbins-Monro recursion toward the target acceptance and the
/// proposal covariance is replaced by the empirical covariance of the
/// burn-in draws at its midpoint and three-quarter point. Evaluation errors
/// count as rejections. Deterministic for a given seed.
pub fn adaptive_metropolis<F>(
    log_f: &F,
    start: &[f64],
    initial_cov: &DMatrix<f64>,
    opts: &McmcOptions,
) -> Result<Chain>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if opts.n_iter == 0 {
        return Err(Error::InvalidArgument("at least one iteration is needed".into()));
    }
    if !(0.0..1.0).contains(&opts.burn_fraction) {
        return Err(Error::InvalidArgument("burn fraction must lie in [0, 1)".into()));
    }
    let d = start.len();
    let mut lf = log_f(start)?;
    if !lf.is_finite() {
        return Err(Error::NonFinite(format!("log density at the start is {lf}")));
    }
    let mut l = factor(initial_cov)
        .ok_or_else(|| Error::NotPositiveDefinite("initial proposal covariance".into()))?;
    let burn = (opts.burn_fraction * opts.n_iter as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DVector::from_column_slice(start);
    let mut log_scale: f64 = 0.0;

    let adapt_from = burn / 4;
    let refresh = [burn / 2, (3 * burn) / 4];
    let mut mean = DVector::zeros(d);
    let mut m2 = DMatrix::zeros(d, d);
    let mut count = 0usize;

    let mut samples = Vec::with_capacity(opts.n_iter - burn);
    let mut dens = Vec::with_capacity(opts.n_iter - burn);
    let mut accepted_after = 0usize;

    for it in 0..opts.n_iter {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prop = &x + (&l * z) * log_scale.exp();
        let u: f64 = rng.random();
        let lp = log_f(prop.as_slice()).ok().filter(|v| !v.is_nan());
        let ratio = match lp {
            Some(v) if v.is_finite() => (v - lf).min(0.0),
            _ => f64::NEG_INFINITY,
        };
        let accept = u.ln() < ratio;
        if accept {
            x = prop;
            lf = lp.expect("accepted proposals are finite");
        }
        if it < burn {
            let gamma = (it as f64 + 1.0).powf(-0.6);
            log_scale += gamma * (ratio.exp() - opts.target_acceptance);
            log_scale = log_scale.clamp(-20.0, 20.0);
            if it >= adapt_from {
                count += 1;
                let delta = &x - &mean;
                mean += &delta / count as f64;
                let delta2 = &x - &mean;
                m2 += &delta * delta2.transpose();
            }
            if refresh.contains(&it) && count > 2 * d + 10 {
                let emp = &m2 / (count as f64 - 1.0) * (2.38 * 2.38 / d as f64);
                if let Some(new_l) = factor(&emp) {
                    l = new_l;
                    log_scale = 0.0;
                }
            }
        } else {
            if accept {
                accepted_after += 1;
            }
            samples.push(x.as_slice().to_vec());
            dens.push(lf);
        }
    }
    let kept = opts.n_iter - burn;
    Ok(Chain {
        samples,
        log_density: dens,
        acceptance_rate: if kept > 0 { accepted_after as f64 / kept as f64 } else { 0.0 },
        burn_in: burn,
    })
}

/// Monte Carlo standard error of the mean by non-overlapping batch means
/// with about `√n` batches.
pub fn batch_means_mcse(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return f64::NAN;
    }
    let b = (n as f64).sqrt().floor() as usize;
    let m = n / b;
    let means: Vec<f64> = (0..b).map(|i| x[i * m..(i + 1) * m].iter().sum::<f64>() / m as f64).collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    (var / b as f64).sqrt()
}
