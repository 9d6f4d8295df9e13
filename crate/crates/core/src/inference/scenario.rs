//! The two longitudinal simulation designs: two markers with random
//! intercepts and slopes under a three-latent tree, and two markers with
//! cubic trajectories and covariates under a seven-latent tree.

use super::model::{Covariate, MarkerSpec, ModelSpec, ResidualStructure};
use super::simulate::Truths;
use crate::error::{Error, Result};
use crate::graph::parse_graph;

pub const LINEAR_GRAPH: &str = "\
latent p1
latent p2 : p1
latent p3 : p1
child c1 : p2
child c2 : p2
child c3 : p3
child c4 : p3
";

pub const CUBIC_GRAPH: &str = "\
latent p1
latent p2 : p1
latent p3 : p1
latent p4 : p2
latent p5 : p2
latent p6 : p3
latent p7 : p3
child c1 : p4
child c2 : p4
child c3 : p5
child c4 : p5
child c5 : p6
child c6 : p6
child c7 : p7
child c8 : p7
";

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub spec: ModelSpec,
    pub truths: Truths,
    pub n_individuals: usize,
    pub times: Vec<f64>,
}

pub const SCENARIO_NAMES: [&str; 2] = ["linear", "cubic"];

fn truths(pairs: &[(&str, f64)]) -> Truths {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn integer_times() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}

impl Scenario {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Self::linear()),
            "cubic" => Ok(Self::cubic()),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scenario `{name}` (expected one of {})",
                SCENARIO_NAMES.join(", ")
            ))),
        }
    }

    /// Random intercepts and slopes of two markers; 200 individuals measured
    /// at t = 0, …, 10 with residual sd 0.05.
    pub fn linear() -> Self {
        let spec = ModelSpec::new(
            parse_graph(LINEAR_GRAPH).expect("built-in graph"),
            vec![MarkerSpec::new("m1", 1, 1), MarkerSpec::new("m2", 1, 1)],
            ResidualStructure::PerMarker,
        )
        .expect("built-in model");
        Self {
            name: "linear",
            spec,
            truths: truths(&[
                ("beta[m1:intercept]", 0.2),
                ("beta[m1:t]", -0.1),
                ("beta[m2:intercept]", 0.2),
                ("beta[m2:t]", -0.1),
                ("sigma_c[c1]", 1.0),
                ("sigma_c[c2]", 0.2),
                ("sigma_c[c3]", 0.1),
                ("sigma_c[c4]", 0.5),
                ("rho[c1,c2]", 0.9),
                ("rho[c3,c4]", 0.9),
                ("rho[c1,c3]", 0.8),
                ("sigma_eps[m1]", 0.05),
                ("sigma_eps[m2]", 0.05),
            ]),
            n_individuals: 200,
            times: integer_times(),
        }
    }

    /// Cubic trajectories with a binary and a continuous covariate; 500
    /// individuals measured at t = 0, …, 10 with residual sd 0.1.
    pub fn cubic() -> Self {
        let cov = [Covariate::XBin, Covariate::XCon];
        let spec = ModelSpec::new(
            parse_graph(CUBIC_GRAPH).expect("built-in graph"),
            vec![
                MarkerSpec::new("m1", 3, 3).with_covariates(&cov),
                MarkerSpec::new("m2", 3, 3).with_covariates(&cov),
            ],
            ResidualStructure::PerMarker,
        )
        .expect("built-in model");
        let mut t = Vec::new();
        for m in ["m1", "m2"] {
            for (term, v) in [("intercept", 0.2), ("t", -0.1), ("t2", -0.1), ("t3", 0.1), ("x_bin", -0.2), ("x_con", 0.1)] {
                t.push((format!("beta[{m}:{term}]"), v));
            }
            t.push((format!("sigma_eps[{m}]"), 0.1));
        }
        for (c, s) in ["c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8"]
            .iter()
            .zip([1.0, 0.2, 0.1, 0.5, 3.0, 4.0, 0.5, 0.2])
        {
            t.push((format!("sigma_c[{c}]"), s));
        }
        for (pair, r) in [
            ("c1,c2", 0.9),
            ("c3,c4", 0.9),
            ("c5,c6", 0.9),
            ("c7,c8", 0.9),
            ("c1,c3", 0.8),
            ("c5,c7", 0.7),
            ("c1,c5", 0.6),
        ] {
            t.push((format!("rho[{pair}]"), r));
        }
        Self {
            name: "cubic",
            spec,
            truths: t.into_iter().collect(),
            n_individuals: 500,
            times: integer_times(),
        }
    }
}
