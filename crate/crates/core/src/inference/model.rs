use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, TreeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    XBin,
    XCon,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::XBin => "x_bin",
            Covariate::XCon => "x_con",
        }
    }
}

/// Fixed and random terms of one marker. Time terms are powers of `t` up to
/// the given degree (at most 3), starting with the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub name: String,
    pub fixed_degree: usize,
    pub random_degree: usize,
    #[serde(default)]
    pub covariates: Vec<Covariate>,
}

impl MarkerSpec {
    pub fn new(name: &str, fixed_degree: usize, random_degree: usize) -> Self {
        Self {
            name: name.to_string(),
            fixed_degree,
            random_degree,
            covariates: Vec::new(),
        }
    }

    pub fn with_covariates(mut self, covariates: &[Covariate]) -> Self {
        self.covariates = covariates.to_vec();
        self
    }

    pub fn fixed_len(&self) -> usize {
        self.fixed_degree + 1 + self.covariates.len()
    }

    pub fn random_len(&self) -> usize {
        self.random_degree + 1
    }

    pub fn fixed_terms(&self) -> Vec<String> {
        (0..=self.fixed_degree)
            .map(time_term)
            .chain(self.covariates.iter().map(|c| c.name().to_string()))
            .collect()
    }

    pub fn fixed_row(&self, t: f64, x_bin: f64, x_con: f64, out: &mut [f64]) {
        let mut p = 1.0;
        for slot in out.iter_mut().take(self.fixed_degree + 1) {
            *slot = p;
            p *= t;
        }
        for (slot, c) in out[self.fixed_degree + 1..].iter_mut().zip(&self.covariates) {
            *slot = match c {
                Covariate::XBin => x_bin,
                Covariate::XCon => x_con,
            };
        }
    }

    pub fn random_row(&self, t: f64, out: &mut [f64]) {
        let mut p = 1.0;
        for slot in out.iter_mut().take(self.random_degree + 1) {
            *slot = p;
            p *= t;
        }
    }
}

fn time_term(power: usize) -> String {
    match power {
        0 => "intercept".into(),
        1 => "t".into(),
        k => format!("t{k}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualStructure {
    /// One residual sd per marker.
    #[default]
    PerMarker,
    Shared,
}

/// A multivariate longitudinal model. The children of `graph`, in
/// declaration order, are the random effects of the markers in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(with = "graph_text")]
    pub graph: TreeGraph,
    pub markers: Vec<MarkerSpec>,
    #[serde(default)]
    pub residual: ResidualStructure,
}

mod graph_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::graph::{parse_graph, TreeGraph};

    pub fn serialize<S: Serializer>(g: &TreeGraph, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&g.to_dsl())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TreeGraph, D::Error> {
        let text = String::deserialize(d)?;
        parse_graph(&text).map_err(serde::de::Error::custom)
    }
}

impl ModelSpec {
    pub fn new(graph: TreeGraph, markers: Vec<MarkerSpec>, residual: ResidualStructure) -> Result<Self> {
        let spec = Self {
            graph,
            markers,
            residual,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        self.graph.ensure_valid()?;
        if self.markers.is_empty() {
            return Err(Error::InvalidArgument("model has no markers".into()));
        }
        for (i, m) in self.markers.iter().enumerate() {
            if m.fixed_degree > 3 || m.random_degree > 3 {
                return Err(Error::InvalidArgument(format!(
                    "marker `{}`: polynomial degree above 3",
                    m.name
                )));
            }
            if m.name.is_empty() || m.name.contains([',', '[', ']', ':']) {
                return Err(Error::InvalidArgument(format!("bad marker name `{}`", m.name)));
            }
            if self.markers[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::InvalidArgument(format!("marker `{}` given twice", m.name)));
            }
        }
        let k: usize = self.markers.iter().map(MarkerSpec::random_len).sum();
        if k != self.graph.child_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} random effects but the graph has {} children",
                k,
                self.graph.child_count()
            )));
        }
        Ok(())
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.name == name)
    }

    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout::new(self)
    }

    pub fn residual_count(&self) -> usize {
        match self.residual {
            ResidualStructure::PerMarker => self.markers.len(),
            ResidualStructure::Shared => 1,
        }
    }

    pub fn residual_index(&self, marker: usize) -> usize {
        match self.residual {
            ResidualStructure::PerMarker => marker,
            ResidualStructure::Shared => 0,
        }
    }

    /// Number of parameters driving the random-effect covariance: one scale
    /// per child plus one variance per latent.
    pub fn structure_parameter_count(&self) -> usize {
        self.graph.child_count() + self.graph.latent_count()
    }

    /// Parameters of an unstructured covariance of the same random effects.
    pub fn unstructured_parameter_count(&self) -> usize {
        let k = self.graph.child_count();
        k * (k + 1) / 2
    }
}

/// Positions of each parameter block in the unconstrained vector
/// `[β, log σ_c, θ = log q², log σ_ε]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    pub beta_offsets: Vec<usize>,
    pub beta_len: usize,
    pub children: Vec<NodeId>,
    pub latents: Vec<NodeId>,
    pub residual_len: usize,
    names: Vec<String>,
}

impl ParameterLayout {
    fn new(spec: &ModelSpec) -> Self {
        let mut names = Vec::new();
        let mut beta_offsets = Vec::new();
        for m in &spec.markers {
            beta_offsets.push(names.len());
            names.extend(m.fixed_terms().iter().map(|t| format!("beta[{}:{}]", m.name, t)));
        }
        let beta_len = names.len();
        names.extend(spec.graph.children().iter().map(|c| format!("log_sigma_c[{c}]")));
        names.extend(spec.graph.latents().iter().map(|l| format!("theta[{l}]")));
        match spec.residual {
            ResidualStructure::PerMarker => {
                names.extend(spec.markers.iter().map(|m| format!("log_sigma_eps[{}]", m.name)))
            }
            ResidualStructure::Shared => names.push("log_sigma_eps".into()),
        }
        Self {
            beta_offsets,
            beta_len,
            children: spec.graph.children().to_vec(),
            latents: spec.graph.latents().to_vec(),
            residual_len: spec.residual_count(),
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Names of the unconstrained coordinates.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn split(&self, x: &[f64]) -> Result<ParameterVector> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} parameters",
                x.len(),
                self.len()
            )));
        }
        let k = self.children.len();
        let p = self.latents.len();
        let b = self.beta_len;
        Ok(ParameterVector {
            beta: x[..b].to_vec(),
            log_sigma_c: x[b..b + k].to_vec(),
            theta: x[b + k..b + k + p].to_vec(),
            log_sigma_eps: x[b + k + p..].to_vec(),
        })
    }

    pub fn check(&self, v: &ParameterVector) -> Result<()> {
        if v.beta.len() != self.beta_len
            || v.log_sigma_c.len() != self.children.len()
            || v.theta.len() != self.latents.len()
            || v.log_sigma_eps.len() != self.residual_len
        {
            return Err(Error::DimensionMismatch("parameter blocks do not match the model".into()));
        }
        Ok(())
    }
}

/// Unconstrained parameters of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    pub log_sigma_c: Vec<f64>,
    /// Log variance of each latent.
    pub theta: Vec<f64>,
    pub log_sigma_eps: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(layout: &ParameterLayout) -> Self {
        Self {
            beta: vec![0.0; layout.beta_len],
            log_sigma_c: vec![0.0; layout.children.len()],
            theta: vec![0.0; layout.latents.len()],
            log_sigma_eps: vec![0.0; layout.residual_len],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.beta
            .iter()
            .chain(&self.log_sigma_c)
            .chain(&self.theta)
            .chain(&self.log_sigma_eps)
            .copied()
            .collect()
    }

    pub fn sigma_c(&self) -> Vec<f64> {
        self.log_sigma_c.iter().map(|v| v.exp()).collect()
    }

    pub fn q2(&self) -> Vec<f64> {
        self.theta.iter().map(|v| v.exp()).collect()
    }

    pub fn sigma_eps(&self) -> Vec<f64> {
        self.log_sigma_eps.iter().map(|v| v.exp()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}
