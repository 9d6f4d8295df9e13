//! Marginal likelihood with the random effects integrated out.
//!
//! For marker `k` of one individual let `Z_k = Q R` (thin QR). Then
//! `â_k = R⁻¹ Qᵀ (y_k − X_k β)` is `N(b_k, σ_k² (RᵀR)⁻¹)` and the part of the
//! residual orthogonal to `Z_k` is white noise with variance `σ_k²`. Stacking
//! the `â_k` gives a `q`-dimensional Gaussian with covariance
//! `G + blockdiag(σ_k² (R_kᵀR_k)⁻¹)`, so each individual costs one small
//! Cholesky factorization regardless of the number of observations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::data::LongitudinalDataset;
use super::model::{ModelSpec, ParameterVector};
use crate::corrmat;
use crate::error::{Error, Result};
use crate::linalg;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
struct ReducedMarker {
    marker: usize,
    beta_offset: usize,
    /// Offset of this marker's effects within the individual's stack.
    a_offset: usize,
    q: usize,
    n: usize,
    yhat: DVector<f64>,
    xhat: DMatrix<f64>,
    yperp: DVector<f64>,
    xperp: DMatrix<f64>,
    log_det_r: f64,
    w: DMatrix<f64>,
}

#[derive(Debug, Clone)]
enum Block {
    Reduced {
        id: String,
        markers: Vec<ReducedMarker>,
        /// Child index of each stacked effect.
        children: Vec<usize>,
    },
    Dense {
        id: String,
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        residual: Vec<usize>,
    },
}

/// Natural-scale parameters used by the likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParameters {
    pub beta: Vec<f64>,
    pub sigma_c: Vec<f64>,
    pub q2: Vec<f64>,
    pub sigma_eps: Vec<f64>,
}

impl From<&ParameterVector> for NaturalParameters {
    fn from(p: &ParameterVector) -> Self {
        Self {
            beta: p.beta.clone(),
            sigma_c: p.sigma_c(),
            q2: p.q2(),
            sigma_eps: p.sigma_eps(),
        }
    }
}

/// A dataset bound to a model, with all parameter-free work done up front.
#[derive(Debug, Clone)]
pub struct Likelihood {
    spec: ModelSpec,
    blocks: Vec<Block>,
    beta_offsets: Vec<usize>,
    #[cfg_attr(not(test), allow(dead_code))]
    child_offsets: Vec<usize>,
}

impl Likelihood {
    pub fn new(data: &LongitudinalDataset, spec: &ModelSpec) -> Result<Self> {
        spec.check()?;
        let layout = spec.layout();
        let mut child_offsets = Vec::with_capacity(spec.markers.len());
        let mut acc = 0;
        for m in &spec.markers {
            child_offsets.push(acc);
            acc += m.random_len();
        }
        let mut blocks = Vec::with_capacity(data.individuals.len());
        for ind in &data.individuals {
            if ind.observations.is_empty() {
                return Err(Error::Data(format!("individual `{}` has no observations", ind.id)));
            }
            let mut rows: Vec<Vec<usize>> = vec![Vec::new(); spec.markers.len()];
            for (r, o) in ind.observations.iter().enumerate() {
                let k = spec.marker_index(&o.marker).ok_or_else(|| {
                    Error::Data(format!(
                        "individual `{}`: marker `{}` is not in the model",
                        ind.id, o.marker
                    ))
                })?;
                rows[k].push(r);
            }
            let mut reduced = Vec::new();
            let mut children = Vec::new();
            let mut dense = false;
            for (k, m) in spec.markers.iter().enumerate() {
                if rows[k].is_empty() {
                    continue;
                }
                let (n, p, q) = (rows[k].len(), m.fixed_len(), m.random_len());
                if n < q {
                    dense = true;
                    break;
                }
                let mut x = DMatrix::zeros(n, p);
                let mut z = DMatrix::zeros(n, q);
                let mut y = DVector::zeros(n);
                let mut buf = vec![0.0; p.max(q)];
                for (i, &r) in rows[k].iter().enumerate() {
                    let o = &ind.observations[r];
                    m.fixed_row(o.time, o.x_bin, o.x_con, &mut buf[..p]);
                    x.row_mut(i).copy_from_slice(&buf[..p]);
                    m.random_row(o.time, &mut buf[..q]);
                    z.row_mut(i).copy_from_slice(&buf[..q]);
                    y[i] = o.y;
                }
                let qr = z.qr();
                let (qm, r) = (qr.q(), qr.r());
                let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
                let max = diag.iter().cloned().fold(0.0, f64::max);
                if max == 0.0 || diag.iter().any(|d| *d <= RANK_TOL * max) {
                    dense = true;
                    break;
                }
                let qty = qm.transpose() * &y;
                let qtx = qm.transpose() * &x;
                let solve = |b: &DMatrix<f64>| {
                    r.solve_upper_triangular(b)
                        .expect("triangular factor has a nonzero diagonal")
                };
                let yhat = solve(&DMatrix::from_column_slice(q, 1, qty.as_slice())).column(0).into_owned();
                let xhat = solve(&qtx);
                let rinv = solve(&DMatrix::identity(q, q));
                let mut w = &rinv * rinv.transpose();
                linalg::symmetrize(&mut w);
                reduced.push(ReducedMarker {
                    marker: k,
                    beta_offset: layout.beta_offsets[k],
                    a_offset: children.len(),
                    q,
                    n,
                    yperp: &y - &qm * &qty,
                    xperp: &x - &qm * &qtx,
                    yhat,
                    xhat,
                    log_det_r: diag.iter().map(|d| d.ln()).sum(),
                    w,
                });
                children.extend(child_offsets[k]..child_offsets[k] + q);
            }
            if dense {
                blocks.push(dense_block(ind, spec, &layout.beta_offsets, &child_offsets)?);
            } else {
                blocks.push(Block::Reduced {
                    id: ind.id.clone(),
                    markers: reduced,
                    children,
                });
            }
        }
        Ok(Self {
            spec: spec.clone(),
            blocks,
            beta_offsets: layout.beta_offsets,
            child_offsets,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_individuals(&self) -> usize {
        self.blocks.len()
    }

    /// Random-effect covariance `D C D`.
    pub fn random_effect_covariance(&self, sigma_c: &[f64], q2: &[f64]) -> DMatrix<f64> {
        let c = corrmat::oracle_values(&self.spec.graph, q2);
        corrmat::scale_values(&c, sigma_c)
    }

    pub fn loglik(&self, p: &ParameterVector) -> Result<f64> {
        self.spec.layout().check(p)?;
        self.loglik_natural(&NaturalParameters::from(p))
    }

    /// Per-individual terms are summed in data order, so results do not
    /// depend on thread scheduling.
    pub fn loglik_natural(&self, p: &NaturalParameters) -> Result<f64> {
        if p.sigma_c.iter().chain(&p.sigma_eps).any(|s| !(*s >= 0.0) || !s.is_finite())
            || p.q2.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || p.beta.iter().any(|b| !b.is_finite())
        {
            return Err(Error::NonFinite("parameters outside their domain".into()));
        }
        let g = self.random_effect_covariance(&p.sigma_c, &p.q2);
        let terms: Vec<Result<f64>> = self
            .blocks
            .par_iter()
            .map(|b| self.block_loglik(b, p, &g))
            .collect();
        let mut total = 0.0;
        for t in terms {
            total += t?;
        }
        Ok(total)
    }

    fn block_loglik(&self, block: &Block, p: &NaturalParameters, g: &DMatrix<f64>) -> Result<f64> {
        match block {
            Block::Reduced { id, markers, children } => {
                let q = children.len();
                let mut s = DMatrix::zeros(q, q);
                for (i, &ci) in children.iter().enumerate() {
                    for (j, &cj) in children.iter().enumerate() {
                        s[(i, j)] = g[(ci, cj)];
                    }
                }
                let mut a = DVector::zeros(q);
                let mut ll = 0.0;
                let mut log_det_r = 0.0;
                for m in markers {
                    let sigma = p.sigma_eps[self.spec.residual_index(m.marker)];
                    let var = sigma * sigma;
                    if var == 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    let beta = DVector::from_column_slice(
                        &p.beta[m.beta_offset..m.beta_offset + m.xhat.ncols()],
                    );
                    let ak = &m.yhat - &m.xhat * &beta;
                    a.rows_mut(m.a_offset, m.q).copy_from(&ak);
                    let mut block = s.view_mut((m.a_offset, m.a_offset), (m.q, m.q));
                    block += &m.w * var;
                    let v = &m.yperp - &m.xperp * &beta;
                    let dof = (m.n - m.q) as f64;
                    ll -= 0.5 * (dof * (2.0 * PI * var).ln() + v.norm_squared() / var);
                    log_det_r += m.log_det_r;
                }
                let chol = linalg::cholesky(&s, &format!("marginal covariance of individual `{id}`"))?;
                let quad = a.dot(&chol.solve(&a));
                ll -= 0.5 * (q as f64 * (2.0 * PI).ln() + 2.0 * log_det_r + linalg::log_det(&chol) + quad);
                Ok(ll)
            }
            Block::Dense { id, y, x, z, residual } => {
                let beta = DVector::from_column_slice(&p.beta);
                let r = y - x * beta;
                let mut v = z * g * z.transpose();
                for (i, &k) in residual.iter().enumerate() {
                    let s = p.sigma_eps[k];
                    v[(i, i)] += s * s;
                }
                linalg::symmetrize(&mut v);
                let chol = linalg::cholesky(&v, &format!("marginal covariance of individual `{id}`"))?;
                let n = y.len() as f64;
                Ok(-0.5 * (n * (2.0 * PI).ln() + linalg::log_det(&chol) + r.dot(&chol.solve(&r))))
            }
        }
    }

    /// Ordinary least squares for each marker separately, ignoring random
    /// effects.
    pub fn ols_beta(&self, data: &LongitudinalDataset) -> Result<Vec<f64>> {
        let mut beta = vec![0.0; self.spec.layout().beta_len];
        for (k, m) in self.spec.markers.iter().enumerate() {
            let obs: Vec<_> = data
                .individuals
                .iter()
                .flat_map(|i| &i.observations)
                .filter(|o| o.marker == m.name)
                .collect();
            if obs.is_empty() {
                continue;
            }
            let p = m.fixed_len();
            let mut x = DMatrix::zeros(obs.len(), p);
            let mut buf = vec![0.0; p];
            for (i, o) in obs.iter().enumerate() {
                m.fixed_row(o.time, o.x_bin, o.x_con, &mut buf);
                x.row_mut(i).copy_from_slice(&buf);
            }
            let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.y));
            let sol = x
                .svd(true, true)
                .solve(&y, 1e-12)
                .map_err(|e| Error::Data(format!("least squares for `{}`: {e}", m.name)))?;
            beta[self.beta_offsets[k]..self.beta_offsets[k] + p].copy_from_slice(sol.as_slice());
        }
        Ok(beta)
    }
}

fn dense_block(
    ind: &super::data::Individual,
    spec: &ModelSpec,
    beta_offsets: &[usize],
    child_offsets: &[usize],
) -> Result<Block> {
    let n = ind.observations.len();
    let layout = spec.layout();
    let mut x = DMatrix::zeros(n, layout.beta_len);
    let mut z = DMatrix::zeros(n, spec.graph.child_count());
    let mut y = DVector::zeros(n);
    let mut residual = Vec::with_capacity(n);
    for (i, o) in ind.observations.iter().enumerate() {
        let k = spec.marker_index(&o.marker).expect("markers checked");
        let m = &spec.markers[k];
        let mut buf = vec![0.0; m.fixed_len().max(m.random_len())];
        m.fixed_row(o.time, o.x_bin, o.x_con, &mut buf[..m.fixed_len()]);
        for (j, v) in buf[..m.fixed_len()].iter().enumerate() {
            x[(i, beta_offsets[k] + j)] = *v;
        }
        m.random_row(o.time, &mut buf[..m.random_len()]);
        for (j, v) in buf[..m.random_len()].iter().enumerate() {
            z[(i, child_offsets[k] + j)] = *v;
        }
        y[i] = o.y;
        residual.push(spec.residual_index(k));
    }
    Ok(Block::Dense {
        id: ind.id.clone(),
        y,
        x,
        z,
        residual,
    })
}

/// Log marginal likelihood of `data` under `spec` at `params`.
pub fn marginal_loglik(data: &LongitudinalDataset, spec: &ModelSpec, params: &ParameterVector) -> Result<f64> {
    Likelihood::new(data, spec)?.loglik(params)
}
