//! Sequential penalized-complexity prior over the latent variances.
//!
//! The latents are removed one at a time (see [`TreeGraph::contract`]). For
//! each step the richer model keeps the removed latent at variance `ξ` and the
//! simpler model drops it, both at the same variances for the latents that
//! are still present. The distance between the two children correlation
//! matrices, `d(ξ) = sqrt(2 KLD)`, gets an exponential prior with rate `λ`,
//! and the joint prior is the product of these conditional densities.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrmat::{self, check_variance, CorrelationMatrix, VarianceAssignment};
use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::graph::{NodeId, SequenceModel, TreeGraph};
use crate::linalg;

pub const DEFAULT_LAMBDA: f64 = 5.0;

const FISHER_STEP: f64 = 1e-3;
const SMALL_XI: f64 = 1e-8;
const MAX_BRACKET: f64 = 1e12;
const ROOT_RTOL: f64 = 1e-10;

/// `KLD(N(0, flex) ‖ N(0, base))` for two correlation matrices.
pub fn kld_gaussian(flex: &CorrelationMatrix, base: &CorrelationMatrix) -> Result<f64> {
    if flex.dim() != base.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} against {}x{}",
            flex.dim(),
            flex.dim(),
            base.dim(),
            base.dim()
        )));
    }
    let chol = linalg::cholesky(base.matrix(), "base correlation")?;
    let l = chol.l();
    if linalg::cholesky(flex.matrix(), "flexible correlation").is_err() {
        return Err(Error::NotPositiveDefinite("flexible correlation".into()));
    }
    kld_factored(flex.matrix(), base.matrix(), &l)
}

/// KLD from the eigenvalues `μ` of `L⁻¹ (A − B) L⁻ᵀ` with `B = L Lᵀ`:
/// `½ Σ (μ − log(1 + μ))`. Exact for small perturbations, where the trace and
/// log-determinant terms would cancel.
fn kld_factored(a: &DMatrix<f64>, b: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let diff = a - b;
    let x = l
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::NotPositiveDefinite("base correlation".into()))?;
    let mut s = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("base correlation".into()))?;
    linalg::symmetrize(&mut s);
    let mut total = 0.0;
    for mu in s.symmetric_eigenvalues().iter() {
        if *mu <= -1.0 {
            return Err(Error::NotPositiveDefinite("flexible correlation".into()));
        }
        total += excess(*mu);
    }
    let k = 0.5 * total;
    if k < 0.0 {
        if k > -1e-12 {
            return Ok(0.0);
        }
        return Err(Error::NonFinite(format!("negative divergence {k}")));
    }
    Ok(k)
}

/// `μ − log(1 + μ)`, by series near zero.
fn excess(mu: f64) -> f64 {
    if mu.abs() < 1e-2 {
        let mut term = mu * mu;
        let mut sum = 0.0;
        for n in 2..10 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term / n as f64;
            term *= mu;
        }
        sum
    } else {
        mu - mu.ln_1p()
    }
}

/// How a step density is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityMode {
    /// Exact distance with a numerical Jacobian.
    #[default]
    Exact,
    /// First-order distance `sqrt(I(0)) ξ`.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    #[default]
    Variance,
    LogVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorDensityValue {
    pub log_density: f64,
    pub parametrization: Parametrization,
}

/// Distance between the model with the removed latent at variance `ξ` and
/// the model without it, all other variances held fixed.
#[derive(Debug, Clone)]
pub struct StepProfile {
    removed: NodeId,
    flex: TreeGraph,
    removed_idx: usize,
    q2: Vec<f64>,
    base: DMatrix<f64>,
    base_l: DMatrix<f64>,
}

impl StepProfile {
    /// `graph` contains the removed latent; `remaining` must give a variance
    /// for each of its other latents.
    pub fn new(graph: &TreeGraph, remaining: &VarianceAssignment, removed: &str) -> Result<Self> {
        graph.ensure_valid()?;
        let idx = graph
            .latent_index(removed)
            .ok_or_else(|| Error::InvalidArgument(format!("`{removed}` is not a latent")))?;
        if remaining.get(removed).is_some() {
            return Err(Error::InvalidArgument(format!(
                "`{removed}` is being removed and cannot also be conditioned on"
            )));
        }
        let mut q2 = Vec::with_capacity(graph.latent_count());
        for (i, l) in graph.latents().iter().enumerate() {
            if i == idx {
                q2.push(0.0);
                continue;
            }
            let v = remaining
                .get(l.as_str())
                .ok_or_else(|| Error::MissingVariance(l.to_string()))?;
            check_variance(l.as_str(), v)?;
            q2.push(v);
        }
        Self::from_parts(graph, idx, q2)
    }

    /// `q2` aligned with `graph.latents()`; the slot of `idx` is ignored.
    pub(crate) fn from_parts(graph: &TreeGraph, idx: usize, q2: Vec<f64>) -> Result<Self> {
        let removed = graph.latents()[idx].clone();
        let base = if graph.latent_parent_index(idx).is_some() {
            let reduced = graph.without_latent(idx);
            let rq: Vec<f64> = q2
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, v)| *v)
                .collect();
            corrmat::oracle_values(&reduced, &rq)
        } else if graph.latent_count() == 1 {
            DMatrix::identity(graph.child_count(), graph.child_count())
        } else {
            return Err(Error::InvalidArgument(format!(
                "the root `{removed}` can only be removed once it is the last latent"
            )));
        };
        let base_l = linalg::cholesky(&base, "base correlation")?.l();
        Ok(Self {
            removed,
            flex: graph.clone(),
            removed_idx: idx,
            q2,
            base,
            base_l,
        })
    }

    pub fn removed(&self) -> &NodeId {
        &self.removed
    }

    /// Correlation of the richer model at `ξ`.
    pub fn flexible_correlation(&self, xi: f64) -> DMatrix<f64> {
        let mut q2 = self.q2.clone();
        q2[self.removed_idx] = xi;
        corrmat::oracle_values(&self.flex, &q2)
    }

    pub fn base_correlation(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn kld(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::InvalidArgument(format!("ξ must be finite and ≥ 0, got {xi}")));
        }
        if xi == 0.0 {
            return Ok(0.0);
        }
        kld_factored(&self.flexible_correlation(xi), &self.base, &self.base_l)
    }

    pub fn distance(&self, xi: f64) -> Result<f64> {
        Ok((2.0 * self.kld(xi)?).sqrt())
    }

    /// `I(0) = lim 2 KLD(ξ)/ξ²`, by Richardson extrapolation of one-sided
    /// evaluations at `h, h/2, h/4`.
    pub fn fisher_at_base(&self) -> Result<f64> {
        let f = |xi: f64| -> Result<f64> { Ok(2.0 * self.kld(xi)? / (xi * xi)) };
        let h = FISHER_STEP;
        let (f1, f2, f4) = (f(h)?, f(h / 2.0)?, f(h / 4.0)?);
        let r1 = 2.0 * f2 - f1;
        let r2 = 2.0 * f4 - f2;
        Ok(((4.0 * r2 - r1) / 3.0).max(0.0))
    }

    /// `d′(ξ) = KLD′(ξ) / d(ξ)` with `KLD′ = ½ tr(A⁻¹ (A − B) B⁻¹ A′)`, where
    /// `A′` is the path-rule derivative of the flexible correlation.
    pub fn distance_derivative(&self, xi: f64) -> Result<f64> {
        let d = self.distance(xi)?;
        if xi < SMALL_XI || d == 0.0 {
            return Ok(self.fisher_at_base()?.sqrt());
        }
        let mut q2 = self.q2.clone();
        q2[self.removed_idx] = xi;
        let a = corrmat::oracle_values(&self.flex, &q2);
        let da = corrmat::oracle_derivative(&self.flex, &q2, self.removed_idx);
        let x = self
            .base_l
            .solve_lower_triangular(&da)
            .and_then(|x| self.base_l.transpose().solve_upper_triangular(&x))
            .ok_or_else(|| Error::NotPositiveDefinite("base correlation".into()))?;
        let m = (&a - &self.base) * x;
        let y = linalg::cholesky(&a, "flexible correlation")?.solve(&m);
        Ok(0.5 * y.trace() / d)
    }

    /// `d′(ξ)` by central difference with step `max(1e-6, 1e-6 ξ)`, capped
    /// at `ξ/2`.
    pub fn distance_derivative_fd(&self, xi: f64) -> Result<f64> {
        if xi < SMALL_XI {
            return Ok(self.fisher_at_base()?.sqrt());
        }
        let h = (1e-6 * xi).max(1e-6).min(0.5 * xi);
        Ok((self.distance(xi + h)? - self.distance(xi - h)?) / (2.0 * h))
    }

    pub fn log_density(
        &self,
        xi: f64,
        lambda: f64,
        mode: DensityMode,
        param: Parametrization,
    ) -> Result<PriorDensityValue> {
        check_lambda(lambda)?;
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "variance of `{}` must be finite and > 0, got {xi}",
                self.removed
            )));
        }
        let mut lp = match mode {
            DensityMode::Exact => {
                let d = self.distance(xi)?;
                let dd = self.distance_derivative(xi)?;
                if !(dd > 0.0) {
                    return Err(Error::NonMonotoneDistance {
                        removed: self.removed.to_string(),
                        at: xi,
                    });
                }
                lambda.ln() - lambda * d + dd.ln()
            }
            DensityMode::Approximate => {
                let rate = lambda * self.fisher_at_base()?.sqrt();
                if !(rate > 0.0) {
                    return Err(Error::NonMonotoneDistance {
                        removed: self.removed.to_string(),
                        at: 0.0,
                    });
                }
                rate.ln() - rate * xi
            }
        };
        if param == Parametrization::LogVariance {
            lp += xi.ln();
        }
        Ok(PriorDensityValue {
            log_density: lp,
            parametrization: param,
        })
    }

    /// Checks that `d` does not decrease over 200 log-spaced points in
    /// `[1e-6, 1e6]`.
    pub fn probe_monotone(&self) -> Result<()> {
        let mut prev = 0.0;
        for i in 0..200 {
            let xi = 10f64.powf(-6.0 + 12.0 * i as f64 / 199.0);
            let d = self.distance(xi)?;
            if d < prev * (1.0 - 1e-12) || (i == 0 && d <= 0.0) {
                return Err(Error::NonMonotoneDistance {
                    removed: self.removed.to_string(),
                    at: xi,
                });
            }
            prev = d;
        }
        Ok(())
    }

    /// Solves `d(ξ) = target` by bracketing from `ξ = 1` and regula falsi
    /// (Illinois variant) safeguarded with bisection.
    pub fn invert(&self, target: f64) -> Result<f64> {
        if !(target >= 0.0) || !target.is_finite() {
            return Err(Error::InvalidArgument(format!("distance must be ≥ 0, got {target}")));
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        let saturated = || Error::DistanceSaturated {
            removed: self.removed.to_string(),
            target,
        };
        let (mut lo, mut flo) = (0.0, -target);
        let mut hi = 1.0;
        let mut fhi = self.distance(hi)? - target;
        while fhi < 0.0 {
            lo = hi;
            flo = fhi;
            hi *= 2.0;
            if hi > MAX_BRACKET {
                return Err(saturated());
            }
            fhi = self.distance(hi)? - target;
        }
        let mut side = 0i8;
        for _ in 0..400 {
            if hi - lo <= ROOT_RTOL * hi {
                break;
            }
            let width = hi - lo;
            let mut x = (lo * fhi - hi * flo) / (fhi - flo);
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            let fx = self.distance(x)? - target;
            if fx == 0.0 {
                return Ok(x);
            }
            if fx < 0.0 {
                lo = x;
                flo = fx;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = x;
                fhi = fx;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
            if hi - lo > 0.5 * width {
                let mid = 0.5 * (lo + hi);
                let fm = self.distance(mid)? - target;
                if fm < 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                    fhi = fm;
                }
                side = 0;
            }
        }
        Ok(if flo.abs() < fhi.abs() { lo } else { hi })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("λ must be > 0, got {lambda}")))
    }
}

pub fn step_distance(graph: &TreeGraph, remaining: &VarianceAssignment, removed: &str, xi: f64) -> Result<f64> {
    StepProfile::new(graph, remaining, removed)?.distance(xi)
}

pub fn fisher_at_base(graph: &TreeGraph, remaining: &VarianceAssignment, removed: &str) -> Result<f64> {
    StepProfile::new(graph, remaining, removed)?.fisher_at_base()
}

pub fn step_log_density(
    graph: &TreeGraph,
    remaining: &VarianceAssignment,
    removed: &str,
    xi: f64,
    lambda: f64,
    mode: DensityMode,
    param: Parametrization,
) -> Result<PriorDensityValue> {
    StepProfile::new(graph, remaining, removed)?.log_density(xi, lambda, mode, param)
}

/// Rate and removal order of the sequential prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCPriorSpec {
    pub lambda: f64,
    /// `None` removes latents in reverse declaration order.
    #[serde(default)]
    pub removal_order: Option<Vec<NodeId>>,
    #[serde(default)]
    pub mode: DensityMode,
}

impl Default for PCPriorSpec {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            removal_order: None,
            mode: DensityMode::Exact,
        }
    }
}

impl PCPriorSpec {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

/// One conditional factor of the joint prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTerm {
    pub removed: NodeId,
    pub conditioning: Vec<NodeId>,
    pub variance: f64,
    pub distance: f64,
    pub log_density: f64,
}

/// The contraction sequence of a graph, with each step's latents mapped back
/// to the original latent indices. Build once, evaluate many times.
#[derive(Debug, Clone)]
pub struct SequentialPrior {
    spec: PCPriorSpec,
    steps: Vec<PriorStep>,
    latents: Vec<NodeId>,
}

#[derive(Debug, Clone)]
struct PriorStep {
    graph: TreeGraph,
    removed_local: usize,
    /// Original index of each latent of `graph`.
    map: Vec<usize>,
}

impl SequentialPrior {
    pub fn new(graph: &TreeGraph, spec: &PCPriorSpec) -> Result<Self> {
        check_lambda(spec.lambda)?;
        let seq = graph.contract(spec.removal_order.as_deref())?;
        let steps = seq
            .steps()
            .map(|(g, removed)| PriorStep {
                graph: g.clone(),
                removed_local: g.latent_index(removed.as_str()).expect("removed latent is present"),
                map: g
                    .latents()
                    .iter()
                    .map(|l| graph.latent_index(l.as_str()).expect("contracted latent exists"))
                    .collect(),
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            steps,
            latents: graph.latents().to_vec(),
        })
    }

    pub fn spec(&self) -> &PCPriorSpec {
        &self.spec
    }

    /// Latents in removal order.
    pub fn removal_order(&self) -> Vec<NodeId> {
        self.steps.iter().map(|s| s.graph.latents()[s.removed_local].clone()).collect()
    }

    fn profile(&self, step: &PriorStep, q2: &[f64]) -> Result<StepProfile> {
        let local: Vec<f64> = step.map.iter().map(|&i| q2[i]).collect();
        StepProfile::from_parts(&step.graph, step.removed_local, local)
    }

    fn check(&self, q2: &[f64]) -> Result<()> {
        if q2.len() != self.latents.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} variances for {} latents",
                q2.len(),
                self.latents.len()
            )));
        }
        for (l, &v) in self.latents.iter().zip(q2) {
            check_variance(l.as_str(), v)?;
        }
        Ok(())
    }

    /// Log prior density of variances aligned with the graph's latents.
    pub fn log_density(&self, q2: &[f64], param: Parametrization) -> Result<f64> {
        self.check(q2)?;
        let mut total = 0.0;
        for step in &self.steps {
            let xi = q2[step.map[step.removed_local]];
            total += self
                .profile(step, q2)?
                .log_density(xi, self.spec.lambda, self.spec.mode, param)?
                .log_density;
        }
        Ok(total)
    }

    pub fn breakdown(&self, q2: &[f64]) -> Result<Vec<StepTerm>> {
        self.check(q2)?;
        self.steps
            .iter()
            .map(|step| {
                let profile = self.profile(step, q2)?;
                let xi = q2[step.map[step.removed_local]];
                Ok(StepTerm {
                    removed: profile.removed().clone(),
                    conditioning: step
                        .graph
                        .latents()
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != step.removed_local)
                        .map(|(_, l)| l.clone())
                        .collect(),
                    variance: xi,
                    distance: profile.distance(xi)?,
                    log_density: profile
                        .log_density(xi, self.spec.lambda, self.spec.mode, Parametrization::Variance)?
                        .log_density,
                })
            })
            .collect()
    }

    /// Runs the monotonicity probe on every step.
    pub fn probe_monotone(&self, q2: &[f64]) -> Result<()> {
        self.check(q2)?;
        for step in &self.steps {
            self.profile(step, q2)?.probe_monotone()?;
        }
        Ok(())
    }

    /// One joint draw, root first. Returns variances and the drawn distances,
    /// both aligned with the graph's latents. With `censor`, a distance beyond
    /// the bracket cap is replaced by the cap and counted.
    fn draw<R: Rng>(&self, rng: &mut R, censor: bool) -> Result<Draw> {
        let exp = Exp::new(self.spec.lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let n = self.latents.len();
        let mut out = Draw {
            q2: vec![1.0; n],
            distances: vec![0.0; n],
            censored: 0,
        };
        for step in self.steps.iter().rev() {
            let d: f64 = exp.sample(rng);
            let target = step.map[step.removed_local];
            out.q2[target] = self.solve_step(step, &out.q2, d, censor, &mut out.censored)?;
            out.distances[target] = d;
        }
        Ok(out)
    }

    /// Draws only the first-removed step with all other latents fixed.
    fn draw_first<R: Rng>(&self, rng: &mut R, fixed: &[f64], censor: bool) -> Result<Draw> {
        let exp = Exp::new(self.spec.lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let step = &self.steps[0];
        let d: f64 = exp.sample(rng);
        let mut out = Draw {
            q2: fixed.to_vec(),
            distances: vec![0.0; fixed.len()],
            censored: 0,
        };
        let target = step.map[step.removed_local];
        out.q2[target] = self.solve_step(step, fixed, d, censor, &mut out.censored)?;
        out.distances[target] = d;
        Ok(out)
    }

    fn solve_step(&self, step: &PriorStep, q2: &[f64], d: f64, censor: bool, censored: &mut usize) -> Result<f64> {
        match self.profile(step, q2)?.invert(d) {
            Err(Error::DistanceSaturated { .. }) if censor => {
                *censored += 1;
                Ok(MAX_BRACKET)
            }
            other => other,
        }
    }
}

struct Draw {
    q2: Vec<f64>,
    distances: Vec<f64>,
    censored: usize,
}

/// Log of the joint prior density of `v` in the variance parametrization.
pub fn joint_log_prior(graph: &TreeGraph, v: &VarianceAssignment, spec: &PCPriorSpec) -> Result<f64> {
    let q2 = v.for_graph(graph)?;
    SequentialPrior::new(graph, spec)?.log_density(&q2, Parametrization::Variance)
}

/// A prior draw together with the distance drawn at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDraw {
    pub variances: VarianceAssignment,
    pub distances: VarianceAssignment,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` independent joint draws. Draw `i` uses stream `i` of the seeded
/// generator, so results do not depend on thread scheduling.
pub fn sample_prior_draws(
    graph: &TreeGraph,
    spec: &PCPriorSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<PriorDraw>> {
    let prior = SequentialPrior::new(graph, spec)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let draw = prior.draw(&mut stream_rng(seed, i as u64), false)?;
            Ok(PriorDraw {
                variances: VarianceAssignment::from_aligned(graph, &draw.q2),
                distances: VarianceAssignment::from_aligned(graph, &draw.distances),
            })
        })
        .collect()
}

pub fn sample_prior(graph: &TreeGraph, spec: &PCPriorSpec, n: usize, seed: u64) -> Result<Vec<VarianceAssignment>> {
    Ok(sample_prior_draws(graph, spec, n, seed)?
        .into_iter()
        .map(|d| d.variances)
        .collect())
}

/// Summary of one induced correlation for one `λ` (and base sd).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub lambda: f64,
    pub conditioning_sd: Option<f64>,
    pub pair_class: String,
    pub deciles: [f64; 9],
    pub mean: f64,
    pub n: usize,
    /// Draws whose distance exceeded what the bracket cap reaches; their
    /// variance was set to the cap.
    pub censored: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CalibrationTable {
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,conditioning_sd,pair_class,q10,q20,q30,q40,q50,q60,q70,q80,q90,mean,n,censored\n");
        for r in &self.rows {
            let mut cells = vec![
                fmt_num(r.lambda),
                r.conditioning_sd.map(fmt_num).unwrap_or_default(),
                format!("\"{}\"", r.pair_class),
            ];
            cells.extend(r.deciles.iter().map(|v| fmt_num(*v)));
            cells.push(fmt_num(r.mean));
            cells.push(r.n.to_string());
            cells.push(r.censored.to_string());
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "lambda": r.lambda,
                        "conditioning_sd": r.conditioning_sd,
                        "pair_class": r.pair_class,
                        "q10": r.deciles[0], "q20": r.deciles[1], "q30": r.deciles[2],
                        "q40": r.deciles[3], "q50": r.deciles[4], "q60": r.deciles[5],
                        "q70": r.deciles[6], "q80": r.deciles[7], "q90": r.deciles[8],
                        "mean": r.mean,
                        "n": r.n,
                        "censored": r.censored,
                    })
                })
                .collect(),
        )
    }
}

/// Label used for the correlation shared by a group of child pairs.
pub fn pair_label(a: &NodeId, b: &NodeId) -> String {
    format!("rho[{a},{b}]")
}

/// Distribution of the induced correlations under the prior, for each `λ`.
///
/// Draws whose distance lies beyond the reach of the bracket cap (`ξ = 1e12`)
/// are censored at the cap and counted in [`CalibrationRow::censored`].
///
/// Without `conditioning_sds` the whole sequence is sampled. With them, every
/// latent except the first one removed is fixed at variance `sd²` and only the
/// first step is sampled, once per listed sd.
pub fn calibrate_lambda(
    graph: &TreeGraph,
    lambdas: &[f64],
    n: usize,
    conditioning_sds: &[f64],
    removal_order: Option<&[NodeId]>,
    seed: u64,
) -> Result<CalibrationTable> {
    graph.ensure_valid()?;
    for &l in lambdas {
        check_lambda(l)?;
    }
    for &sd in conditioning_sds {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("conditioning sd must be > 0, got {sd}")));
        }
    }
    if !conditioning_sds.is_empty() && graph.latent_count() < 2 {
        return Err(Error::InvalidArgument(
            "conditioning needs a graph with at least two latents".into(),
        ));
    }
    let mut table = CalibrationTable::default();
    if n == 0 {
        return Ok(table);
    }
    let groups = graph.pair_groups();
    let sds: Vec<Option<f64>> = if conditioning_sds.is_empty() {
        vec![None]
    } else {
        conditioning_sds.iter().copied().map(Some).collect()
    };
    for (li, &lambda) in lambdas.iter().enumerate() {
        let spec = PCPriorSpec {
            lambda,
            removal_order: removal_order.map(<[NodeId]>::to_vec),
            mode: DensityMode::Exact,
        };
        let prior = SequentialPrior::new(graph, &spec)?;
        for (si, sd) in sds.iter().enumerate() {
            let fixed = sd.map(|s| vec![s * s; graph.latent_count()]);
            let base_stream = ((li * sds.len() + si) * n) as u64;
            let draws: Vec<(Vec<f64>, usize)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream_rng(seed, base_stream + i as u64);
                    let draw = match &fixed {
                        None => prior.draw(&mut rng, true)?,
                        Some(f) => prior.draw_first(&mut rng, f, true)?,
                    };
                    let c = corrmat::oracle_values(graph, &draw.q2);
                    Ok((groups.iter().map(|g| c[g.pairs[0]]).collect(), draw.censored))
                })
                .collect::<Result<_>>()?;
            let censored = draws.iter().filter(|d| d.1 > 0).count();
            for (gi, g) in groups.iter().enumerate() {
                let mut vals: Vec<f64> = draws.iter().map(|d| d.0[gi]).collect();
                vals.sort_by(f64::total_cmp);
                let mut deciles = [0.0; 9];
                for (k, q) in deciles.iter_mut().enumerate() {
                    *q = linalg::quantile_sorted(&vals, (k + 1) as f64 / 10.0);
                }
                let (a, b) = g.pairs[0];
                table.rows.push(CalibrationRow {
                    lambda,
                    conditioning_sd: *sd,
                    pair_class: pair_label(&graph.children()[a], &graph.children()[b]),
                    deciles,
                    mean: vals.iter().sum::<f64>() / vals.len() as f64,
                    n,
                    censored,
                });
            }
        }
    }
    Ok(table)
}

/// The contraction sequence with the correlation matrix of each model at
/// the given variances (latents dropped by the contraction are ignored).
pub fn sequence_correlations(
    graph: &TreeGraph,
    v: &VarianceAssignment,
    order: Option<&[NodeId]>,
) -> Result<Vec<(Option<TreeGraph>, CorrelationMatrix)>> {
    let seq = graph.contract(order)?;
    seq.models()
        .iter()
        .map(|m| match m {
            SequenceModel::Graph(g) => Ok((Some(g.clone()), corrmat::children_correlation(g, v)?)),
            SequenceModel::Identity { children } => {
                Ok((None, CorrelationMatrix::identity(children.clone())))
            }
        })
        .collect()
}
