//! Quasi-Newton minimization with finite-difference derivatives.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::LongitudinalDataset;
use super::model::{ModelSpec, ParameterVector};
use super::posterior::Posterior;
use crate::error::{Error, Result};
use crate::pcprior::PCPriorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Relative step of the central-difference gradient.
    pub rel_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-5,
            max_iter: 500,
            rel_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn step_for(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference gradient. Non-finite evaluations propagate as NaN.
pub fn fd_gradient<F>(f: &F, x: &[f64], rel: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = step_for(x[i], rel);
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian from function values.
pub fn fd_hessian<F>(f: &F, x: &[f64], rel: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let f0 = f(x);
    let h: Vec<f64> = x.iter().map(|v| step_for(*v, rel)).collect();
    let eval = |shifts: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in shifts {
            p[i] += s * h[i];
        }
        f(&p)
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                (eval(&[(i, 1.0)]) - 2.0 * f0 + eval(&[(i, -1.0)])) / (h[i] * h[i])
            } else {
                (eval(&[(i, 1.0), (j, 1.0)]) - eval(&[(i, 1.0), (j, -1.0)])
                    - eval(&[(i, -1.0), (j, 1.0)])
                    + eval(&[(i, -1.0), (j, -1.0)]))
                    / (4.0 * h[i] * h[j])
            }
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// Minimizes `f` by BFGS with Armijo backtracking. `f` may return a
/// non-finite value to reject a point.
pub fn bfgs_minimize<F>(f: &F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::NonFinite(format!("objective at the starting point is {fx}")));
    }
    let grad = |x: &DVector<f64>| DVector::from_vec(fd_gradient(f, x.as_slice(), opts.rel_step));
    let mut g = grad(&x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient at the starting point".into()));
    }
    let initial_inverse = |x: &DVector<f64>| {
        // diagonal curvature with a coarser step; unit scale where it is not positive
        let mut h = DMatrix::identity(n, n);
        let f0 = f(x.as_slice());
        for i in 0..n {
            let s = step_for(x[i], 1e-4);
            let mut p = x.clone();
            p[i] += s;
            let up = f(p.as_slice());
            p[i] -= 2.0 * s;
            let dn = f(p.as_slice());
            let c = (up - 2.0 * f0 + dn) / (s * s);
            if c.is_finite() && c > 1e-8 {
                h[(i, i)] = 1.0 / c;
            }
        }
        h
    };
    let mut hinv = initial_inverse(&x);
    let mut iterations = 0;
    let mut fresh = true;
    while iterations < opts.max_iter {
        if g.norm() < opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            hinv = initial_inverse(&x);
            fresh = true;
            dir = -(&hinv * &g);
            slope = g.dot(&dir);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * alpha;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            if fresh {
                break;
            }
            hinv = initial_inverse(&x);
            fresh = true;
            continue;
        };
        let gn = grad(&xn);
        if gn.iter().any(|v| !v.is_finite()) {
            break;
        }
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh && iterations == 1 {
                let scale = sy / y.norm_squared();
                if scale.is_finite() && scale > 0.0 && hinv.diagonal().iter().all(|d| *d == 1.0) {
                    hinv *= scale;
                }
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let small_step = (fx - fn_).abs() <= 1e-15 * fx.abs().max(1.0) && s.amax() <= 1e-14 * x.amax().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        fresh = false;
        if small_step {
            break;
        }
    }
    let grad_norm = g.norm();
    Ok(BfgsResult {
        x: x.as_slice().to_vec(),
        value: fx,
        grad_norm,
        iterations,
        converged: grad_norm < opts.grad_tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapFit {
    pub params: ParameterVector,
    pub log_posterior: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Posterior mode over the unconstrained parameters.
pub fn map_fit_posterior(post: &Posterior, init: &ParameterVector, opts: &BfgsOptions) -> Result<MapFit> {
    let x0 = init.to_vec();
    let start = post.log_density(&x0)?;
    if !start.is_finite() {
        return Err(Error::NonFinite(format!("log posterior at the initial point is {start}")));
    }
    let objective = |x: &[f64]| match post.log_density(x) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    };
    let r = bfgs_minimize(&objective, &x0, opts)?;
    Ok(MapFit {
        params: post.layout().split(&r.x)?,
        log_posterior: -r.value,
        converged: r.converged,
        iterations: r.iterations,
        grad_norm: r.grad_norm,
    })
}

/// Maximum a posteriori fit. Without `init`, starts from per-marker least
/// squares for `β` and zeros for every log scale and log variance.
pub fn map_fit(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    prior: &PCPriorSpec,
    init: Option<&ParameterVector>,
) -> Result<MapFit> {
    let post = Posterior::new(data, spec, prior)?;
    let init = match init {
        Some(p) => p.clone(),
        None => post.default_init(data)?,
    };
    map_fit_posterior(&post, &init, &BfgsOptions::default())
}
