use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use super::data::{Individual, LongitudinalDataset, Observation};
use super::fit::{quantities, quantity_names};
use super::model::{ModelSpec, ParameterVector};
use crate::corrmat::{self, CorrelationTarget};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::linalg;

/// True values keyed by the names of [`quantity_names`], e.g.
/// `beta[m1:intercept]`, `sigma_c[c1]`, `q2[p1]`, `rho[c1,c2]`,
/// `sigma_eps[m1]`. Latent variances may be replaced by one `rho[a,b]` per
/// correlation class.
pub type Truths = BTreeMap<String, f64>;

/// Parses `rho[a,b]` into its two child names.
pub fn parse_pair_label(name: &str) -> Option<(&str, &str)> {
    name.strip_prefix("rho[")?.strip_suffix(']')?.split_once(',')
}

/// Turns truths into an unconstrained parameter vector. Missing latent
/// variances are solved from the given correlations.
pub fn resolve_truths(spec: &ModelSpec, truths: &Truths) -> Result<ParameterVector> {
    let layout = spec.layout();
    let known: Vec<String> = quantity_names(spec);
    for k in truths.keys() {
        if !known.contains(k) && parse_pair_label(k).is_none() {
            return Err(Error::InvalidArgument(format!("`{k}` is not a parameter of this model")));
        }
    }
    let need = |name: &str| {
        truths
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no true value for `{name}`")))
    };
    let positive = |name: &str, v: f64| {
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidArgument(format!("`{name}` must be ≥ 0, got {v}")))
        }
    };
    let beta = layout.names()[..layout.beta_len]
        .iter()
        .map(|n| need(n))
        .collect::<Result<Vec<_>>>()?;
    let sigma_c = spec
        .graph
        .children()
        .iter()
        .map(|c| {
            let n = format!("sigma_c[{c}]");
            positive(&n, need(&n)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let sigma_eps: Vec<f64> = known
        .iter()
        .filter(|n| n.starts_with("sigma_eps"))
        .map(|n| positive(n, need(n)?))
        .collect::<Result<_>>()?;
    let q2_names: Vec<String> = spec.graph.latents().iter().map(|l| format!("q2[{l}]")).collect();
    let q2 = if q2_names.iter().all(|n| truths.contains_key(n)) {
        q2_names
            .iter()
            .map(|n| {
                let v = need(n)?;
                corrmat::check_variance(n, v)?;
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let (targets, given) = class_targets(spec, truths)?;
        let q2 = corrmat::solve_variances(&spec.graph, &targets)?.for_graph(&spec.graph)?;
        let c = corrmat::oracle_values(&spec.graph, &q2);
        for (ci, (a, b), value) in given {
            let residual = (c[(a, b)] - value).abs();
            if residual > 1e-8 {
                return Err(Error::Infeasible {
                    class: spec.graph.correlation_classes()[ci].label(),
                    residual,
                });
            }
        }
        q2
    };
    Ok(ParameterVector {
        beta,
        log_sigma_c: sigma_c.iter().map(|s| s.ln()).collect(),
        theta: q2.iter().map(|v| v.ln()).collect(),
        log_sigma_eps: sigma_eps.iter().map(|s| s.ln()).collect(),
    })
}

/// One correlation target per class from the `rho[…]` truths, plus every
/// given correlation as `(class, pair, value)` for checking afterwards.
#[allow(clippy::type_complexity)]
fn class_targets(
    spec: &ModelSpec,
    truths: &Truths,
) -> Result<(Vec<CorrelationTarget>, Vec<(usize, (usize, usize), f64)>)> {
    let g = &spec.graph;
    let classes = g.correlation_classes();
    let mut chosen: Vec<Option<CorrelationTarget>> = vec![None; classes.len()];
    let mut given = Vec::new();
    for (name, &value) in truths.iter().filter(|(n, _)| n.starts_with("rho[")) {
        let (a, b) = parse_pair_label(name)
            .ok_or_else(|| Error::InvalidArgument(format!("bad correlation name `{name}`")))?;
        let (ka, kb) = match (g.child_index(a), g.child_index(b)) {
            (Some(x), Some(y)) if x != y => (x.min(y), x.max(y)),
            _ => return Err(Error::InvalidArgument(format!("`{name}` does not name two children"))),
        };
        let ci = classes
            .iter()
            .position(|c| c.pairs.contains(&(ka, kb)))
            .expect("every pair has a class");
        given.push((ci, (ka, kb), value));
        if chosen[ci].is_none() {
            chosen[ci] = Some(CorrelationTarget {
                a: NodeId::new(a)?,
                b: NodeId::new(b)?,
                value,
            });
        }
    }
    let targets = chosen
        .into_iter()
        .zip(&classes)
        .map(|(t, c)| {
            t.ok_or_else(|| {
                Error::InvalidArgument(format!("no correlation given for class `{}`", c.label()))
            })
        })
        .collect::<Result<_>>()?;
    Ok((targets, given))
}

/// Every reported quantity at the truths, including derived correlations.
pub fn complete_truths(spec: &ModelSpec, truths: &Truths) -> Result<Truths> {
    let p = resolve_truths(spec, truths)?;
    Ok(quantity_names(spec).into_iter().zip(quantities(spec, &p)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub dataset: LongitudinalDataset,
    /// Random effects of each individual, in child order.
    pub random_effects: Vec<DVector<f64>>,
    pub truth: ParameterVector,
}

/// Draws `n` individuals measured at `times` on every marker. Each
/// individual gets `x_bin ~ Bernoulli(0.5)` and `x_con ~ N(1, 0.5)`.
/// Individual `i` uses stream `i` of the seeded generator.
pub fn simulate_dataset(
    spec: &ModelSpec,
    truths: &Truths,
    n: usize,
    times: &[f64],
    seed: u64,
) -> Result<SimulatedData> {
    spec.check()?;
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("need at least one finite time".into()));
    }
    let truth = resolve_truths(spec, truths)?;
    let c = corrmat::oracle_values(&spec.graph, &truth.q2());
    let k = c.nrows();
    // D C D is singular when a scale is zero, so factor C and scale after
    let lc = linalg::cholesky(&c, "random-effect correlation")?.l();
    let sd = truth.sigma_c();
    let sigma_eps = truth.sigma_eps();
    let layout = spec.layout();
    let bern = Bernoulli::new(0.5).expect("valid probability");
    let xcon = Normal::new(1.0, 0.5f64.sqrt()).expect("valid sd");

    let drawn: Vec<(Individual, DVector<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x_bin = if bern.sample(&mut rng) { 1.0 } else { 0.0 };
            let x_con = xcon.sample(&mut rng);
            let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut b = &lc * z;
            for (bi, s) in b.iter_mut().zip(&sd) {
                *bi *= s;
            }
            let mut obs = Vec::with_capacity(times.len() * spec.markers.len());
            let mut child = 0;
            for (mk, m) in spec.markers.iter().enumerate() {
                let off = layout.beta_offsets[mk];
                let beta = &truth.beta[off..off + m.fixed_len()];
                let bk = &b.as_slice()[child..child + m.random_len()];
                let se = sigma_eps[spec.residual_index(mk)];
                let mut xr = vec![0.0; m.fixed_len()];
                let mut zr = vec![0.0; m.random_len()];
                for &t in times {
                    m.fixed_row(t, x_bin, x_con, &mut xr);
                    m.random_row(t, &mut zr);
                    let mu: f64 = xr.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
                        + zr.iter().zip(bk).map(|(a, b)| a * b).sum::<f64>();
                    let e: f64 = rng.sample(StandardNormal);
                    obs.push(Observation {
                        marker: m.name.clone(),
                        time: t,
                        y: mu + se * e,
                        x_bin,
                        x_con,
                    });
                }
                child += m.random_len();
            }
            (
                Individual {
                    id: (i + 1).to_string(),
                    observations: obs,
                },
                b,
            )
        })
        .collect();
    let (individuals, random_effects) = drawn.into_iter().unzip();
    Ok(SimulatedData {
        dataset: LongitudinalDataset { individuals },
        random_effects,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::scenario::Scenario;

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn random_effect_correlations() {
        let sc = Scenario::linear();
        let sim = simulate_dataset(&sc.spec, &sc.truths, 200, &sc.times, 1).unwrap();
        let col = |k: usize| sim.random_effects.iter().map(|b| b[k]).collect::<Vec<_>>();
        assert!((corr(&col(0), &col(1)) - 0.9).abs() < 0.05);
        assert!((corr(&col(2), &col(3)) - 0.9).abs() < 0.05);
        assert!((corr(&col(0), &col(2)) - 0.8).abs() < 0.05);
        assert!((sim.truth.q2()[0] - 8.0).abs() < 1e-9);
    }

    #[test]
    fn zero_residual_gives_linear_predictor() {
        let sc = Scenario::linear();
        let mut truths = sc.truths.clone();
        truths.insert("sigma_eps[m1]".into(), 0.0);
        truths.insert("sigma_eps[m2]".into(), 0.0);
        let sim = simulate_dataset(&sc.spec, &truths, 5, &sc.times, 2).unwrap();
        for (ind, b) in sim.dataset.individuals.iter().zip(&sim.random_effects) {
            for o in &ind.observations {
                let (off, re) = if o.marker == "m1" { (0, 0) } else { (2, 2) };
                let mu = (sim.truth.beta[off] + sim.truth.beta[off + 1] * o.time) + (b[re] + b[re + 1] * o.time);
                assert_eq!(o.y, mu);
            }
        }
    }

    #[test]
    fn cubic_dimensions() {
        let sc = Scenario::cubic();
        let sim = simulate_dataset(&sc.spec, &sc.truths, sc.n_individuals, &sc.times, 4).unwrap();
        assert_eq!(sim.dataset.n_individuals(), 500);
        assert_eq!(sim.dataset.n_observations(), 500 * 11 * 2);
        assert!(sim.random_effects.iter().all(|b| b.len() == 8));
        for ind in &sim.dataset.individuals {
            let m1 = ind.observations.iter().filter(|o| o.marker == "m1").count();
            assert_eq!(m1, 11);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let sc = Scenario::linear();
        let a = simulate_dataset(&sc.spec, &sc.truths, 20, &sc.times, 9).unwrap();
        let b = simulate_dataset(&sc.spec, &sc.truths, 20, &sc.times, 9).unwrap();
        let c = simulate_dataset(&sc.spec, &sc.truths, 20, &sc.times, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn truth_errors() {
        let sc = Scenario::linear();
        let mut t = sc.truths.clone();
        t.insert("rho[c2,c4]".into(), 0.7);
        assert!(matches!(resolve_truths(&sc.spec, &t), Err(Error::Infeasible { .. })));
        let mut t = sc.truths.clone();
        t.remove("rho[c3,c4]");
        assert!(resolve_truths(&sc.spec, &t).is_err());
        let mut t = sc.truths.clone();
        t.insert("sigma_c[c9]".into(), 1.0);
        assert!(resolve_truths(&sc.spec, &t).is_err());
        let mut t = sc.truths.clone();
        t.insert("rho[c1,c9]".into(), 0.5);
        assert!(resolve_truths(&sc.spec, &t).is_err());
        let mut t = sc.truths.clone();
        t.insert("sigma_c[c1]".into(), -1.0);
        assert!(resolve_truths(&sc.spec, &t).is_err());
    }

    #[test]
    fn direct_variances() {
        let sc = Scenario::linear();
        let mut t: Truths = sc.truths.iter().filter(|(k, _)| !k.starts_with("rho")).map(|(k, v)| (k.clone(), *v)).collect();
        for (l, v) in [("p1", 8.0), ("p2", 1.0), ("p3", 1.0)] {
            t.insert(format!("q2[{l}]"), v);
        }
        let full = complete_truths(&sc.spec, &t).unwrap();
        assert!((full["rho[c1,c2]"] - 0.9).abs() < 1e-12);
        assert!((full["rho[c1,c3]"] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn cubic_truths_solve() {
        let sc = Scenario::cubic();
        let full = complete_truths(&sc.spec, &sc.truths).unwrap();
        for (l, v) in [("p1", 6.0), ("p2", 2.0), ("p3", 1.0), ("p4", 1.0), ("p5", 1.0), ("p6", 2.0), ("p7", 2.0)] {
            assert!((full[&format!("q2[{l}]")] - v).abs() < 1e-8, "{l}");
        }
        assert!((full["rho[c1,c7]"] - 0.6).abs() < 1e-9);
        assert!((full["rho[c3,c5]"] - 0.6).abs() < 1e-9);
    }

    #[test]
    fn pair_labels() {
        assert_eq!(parse_pair_label("rho[c1,c2]"), Some(("c1", "c2")));
        assert_eq!(parse_pair_label("q2[p1]"), None);
    }
}
