//! Correlation matrices induced by a latent tree.
//!
//! Each child is `N(parent, 1)` given its parent, each latent is
//! `N(parent, q²)` given its own parent, and the root is `N(0, q²)`. The
//! joint precision over `[children…, latents…]` is sparse with the graph's
//! adjacency pattern; inverting it and normalizing the child block gives the
//! children's correlation matrix. [`correlation_oracle`] computes the same
//! matrix directly from ancestor sums without any inversion.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::graph::{NodeId, TreeGraph};
use crate::linalg;

/// Parses `"a=1.5,b=2"` into name/value pairs. Duplicate names are an error.
pub fn parse_assignments(text: &str) -> Result<Vec<(NodeId, f64)>> {
    let mut out: Vec<(NodeId, f64)> = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected name=value, got `{item}`")))?;
        let name = NodeId::new(name.trim())?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("`{}` is not a number", value.trim())))?;
        if out.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("`{name}` given twice")));
        }
        out.push((name, value));
    }
    Ok(out)
}

/// Variance `q²` of each latent node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarianceAssignment(BTreeMap<NodeId, f64>);

impl VarianceAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, q2: f64) -> Option<f64> {
        self.0.insert(node, q2)
    }

    pub fn get(&self, node: &str) -> Option<f64> {
        self.0.get(node).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, f64)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn parse_inline(text: &str) -> Result<Self> {
        Ok(Self(parse_assignments(text)?.into_iter().collect()))
    }

    /// Values aligned with `graph.latents()`. Entries for other nodes are
    /// ignored; every latent needs a strictly positive finite variance.
    pub fn for_graph(&self, graph: &TreeGraph) -> Result<Vec<f64>> {
        graph
            .latents()
            .iter()
            .map(|l| {
                let v = self
                    .get(l.as_str())
                    .ok_or_else(|| Error::MissingVariance(l.to_string()))?;
                check_variance(l.as_str(), v)?;
                Ok(v)
            })
            .collect()
    }

    pub fn from_aligned(graph: &TreeGraph, q2: &[f64]) -> Self {
        Self(graph.latents().iter().cloned().zip(q2.iter().copied()).collect())
    }
}

impl FromIterator<(NodeId, f64)> for VarianceAssignment {
    fn from_iter<I: IntoIterator<Item = (NodeId, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

pub(crate) fn check_variance(node: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveVariance {
            node: node.to_string(),
            value: v,
        })
    }
}

/// Standard deviation of each child (random effect).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChildScales(BTreeMap<NodeId, f64>);

impl ChildScales {
    pub fn parse_inline(text: &str) -> Result<Self> {
        Ok(Self(parse_assignments(text)?.into_iter().collect()))
    }

    pub fn get(&self, node: &str) -> Option<f64> {
        self.0.get(node).copied()
    }

    pub fn for_children(&self, order: &[NodeId]) -> Result<Vec<f64>> {
        order
            .iter()
            .map(|c| {
                let s = self.get(c.as_str()).ok_or_else(|| {
                    Error::DimensionMismatch(format!("no scale given for child `{c}`"))
                })?;
                if s > 0.0 && s.is_finite() {
                    Ok(s)
                } else {
                    Err(Error::NonPositiveScale {
                        node: c.to_string(),
                        value: s,
                    })
                }
            })
            .collect()
    }
}

impl FromIterator<(NodeId, f64)> for ChildScales {
    fn from_iter<I: IntoIterator<Item = (NodeId, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Joint precision of the latent tree, node order `[children…, latents…]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    pub order: Vec<NodeId>,
    pub matrix: DMatrix<f64>,
}

/// Children correlation matrix with its node order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    order: Vec<NodeId>,
    matrix: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn new(order: Vec<NodeId>, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != order.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for a {}x{} matrix",
                order.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { order, matrix })
    }

    pub fn identity(order: Vec<NodeId>) -> Self {
        let n = order.len();
        Self {
            order,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.order.iter().position(|n| n.as_str() == a)?;
        let j = self.order.iter().position(|n| n.as_str() == b)?;
        Some(self.matrix[(i, j)])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }

    /// All off-diagonal entries within `tol` of each other.
    pub fn is_exchangeable(&self, tol: f64) -> bool {
        let n = self.dim();
        let off: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|ij| self.matrix[ij])
            .collect();
        match off.first() {
            None => true,
            Some(&first) => off.iter().all(|v| (v - first).abs() <= tol),
        }
    }

    /// Row-major CSV with a header of child names.
    pub fn to_csv(&self) -> String {
        let mut s = self
            .order
            .iter()
            .map(NodeId::as_str)
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| fmt_num(self.matrix[(i, j)])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// `{"order": [...], "matrix": [[...]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)]).collect())
            .collect();
        serde_json::json!({ "order": self.order, "matrix": rows })
    }
}

/// Joint precision matrix of children and latents.
pub fn assemble_precision(graph: &TreeGraph, v: &VarianceAssignment) -> Result<PrecisionMatrix> {
    graph.ensure_valid()?;
    let q2 = v.for_graph(graph)?;
    let order = graph
        .children()
        .iter()
        .chain(graph.latents())
        .cloned()
        .collect();
    Ok(PrecisionMatrix {
        order,
        matrix: precision_values(graph, &q2),
    })
}

pub(crate) fn precision_values(graph: &TreeGraph, q2: &[f64]) -> DMatrix<f64> {
    let k = graph.child_count();
    let n = k + graph.latent_count();
    let mut m = DMatrix::zeros(n, n);
    for c in 0..k {
        let p = k + graph.child_parent_index(c);
        m[(c, c)] = 1.0;
        m[(c, p)] = -1.0;
        m[(p, c)] = -1.0;
        m[(p, p)] += 1.0;
    }
    for (l, &q) in q2.iter().enumerate() {
        let li = k + l;
        let inv = 1.0 / q;
        m[(li, li)] += inv;
        if let Some(p) = graph.latent_parent_index(l) {
            let pi = k + p;
            m[(pi, pi)] += inv;
            m[(li, pi)] = -inv;
            m[(pi, li)] = -inv;
        }
    }
    m
}

/// Correlation of the children: invert the joint precision, normalize by the
/// marginal standard deviations and keep the child block.
pub fn children_correlation(graph: &TreeGraph, v: &VarianceAssignment) -> Result<CorrelationMatrix> {
    graph.ensure_valid()?;
    let q2 = v.for_graph(graph)?;
    let m = correlation_values(graph, &q2)?;
    CorrelationMatrix::new(graph.children().to_vec(), m)
}

/// Inversion route on variances aligned with `graph.latents()`. The graph
/// must be valid and the variances positive.
pub(crate) fn correlation_values(graph: &TreeGraph, q2: &[f64]) -> Result<DMatrix<f64>> {
    let k = graph.child_count();
    let n = k + graph.latent_count();
    let precision = precision_values(graph, q2);
    let chol = linalg::cholesky(&precision, "latent-tree precision")?;
    let mut rhs = DMatrix::zeros(n, k);
    for c in 0..k {
        rhs[(c, c)] = 1.0;
    }
    let cols = chol.solve(&rhs);
    let mut cov = cols.rows(0, k).into_owned();
    linalg::symmetrize(&mut cov);
    Ok(normalize(cov))
}

fn normalize(mut cov: DMatrix<f64>) -> DMatrix<f64> {
    let k = cov.nrows();
    let sd: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt()).collect();
    for i in 0..k {
        for j in 0..k {
            cov[(i, j)] = if i == j { 1.0 } else { cov[(i, j)] / (sd[i] * sd[j]) };
        }
    }
    cov
}

/// Correlation of the children straight from the graph: the variance of a
/// child is one plus the variances along its path to the root, and the
/// covariance of two children is the summed variance of their shared
/// ancestors.
pub fn correlation_oracle(graph: &TreeGraph, v: &VarianceAssignment) -> Result<CorrelationMatrix> {
    graph.ensure_valid()?;
    let q2 = v.for_graph(graph)?;
    CorrelationMatrix::new(graph.children().to_vec(), oracle_values(graph, &q2))
}

pub(crate) fn oracle_values(graph: &TreeGraph, q2: &[f64]) -> DMatrix<f64> {
    let k = graph.child_count();
    let chains: Vec<Vec<usize>> = (0..k).map(|c| graph.child_ancestor_indices(c)).collect();
    let var: Vec<f64> = chains
        .iter()
        .map(|ch| 1.0 + ch.iter().map(|&l| q2[l]).sum::<f64>())
        .collect();
    let mut m = DMatrix::identity(k, k);
    for a in 0..k {
        for b in a + 1..k {
            let cov: f64 = chains[a]
                .iter()
                .filter(|l| chains[b].contains(l))
                .map(|&l| q2[l])
                .sum();
            let r = cov / (var[a] * var[b]).sqrt();
            m[(a, b)] = r;
            m[(b, a)] = r;
        }
    }
    m
}

/// Derivative of the path-rule correlation with respect to the variance of
/// latent `l`.
pub(crate) fn oracle_derivative(graph: &TreeGraph, q2: &[f64], l: usize) -> DMatrix<f64> {
    let k = graph.child_count();
    let chains: Vec<Vec<usize>> = (0..k).map(|c| graph.child_ancestor_indices(c)).collect();
    let var: Vec<f64> = chains
        .iter()
        .map(|ch| 1.0 + ch.iter().map(|&i| q2[i]).sum::<f64>())
        .collect();
    let has: Vec<bool> = chains.iter().map(|ch| ch.contains(&l)).collect();
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a + 1..k {
            let cov: f64 = chains[a]
                .iter()
                .filter(|i| chains[b].contains(i))
                .map(|&i| q2[i])
                .sum();
            let root = (var[a] * var[b]).sqrt();
            let rho = cov / root;
            let shared = if has[a] && has[b] { 1.0 / root } else { 0.0 };
            let spread = 0.5
                * rho
                * (if has[a] { 1.0 / var[a] } else { 0.0 } + if has[b] { 1.0 / var[b] } else { 0.0 });
            m[(a, b)] = shared - spread;
            m[(b, a)] = shared - spread;
        }
    }
    m
}

/// `D C D` with `D = diag(s)`.
pub fn scale_to_covariance(c: &CorrelationMatrix, s: &ChildScales) -> Result<DMatrix<f64>> {
    let sd = s.for_children(c.order())?;
    Ok(scale_values(c.matrix(), &sd))
}

pub(crate) fn scale_values(c: &DMatrix<f64>, sd: &[f64]) -> DMatrix<f64> {
    let d = DVector::from_column_slice(sd);
    let mut out = c.clone();
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            out[(i, j)] *= d[i] * d[j];
        }
    }
    out
}

/// Target correlation for one representative child pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTarget {
    pub a: NodeId,
    pub b: NodeId,
    pub value: f64,
}

impl CorrelationTarget {
    pub fn new(a: &str, b: &str, value: f64) -> Result<Self> {
        Ok(Self {
            a: NodeId::new(a)?,
            b: NodeId::new(b)?,
            value,
        })
    }
}

const SOLVE_TOL: f64 = 1e-12;
const ACCEPT_TOL: f64 = 1e-9;
const MAX_LOG_VARIANCE: f64 = 40.0;

/// Latent variances reproducing one target correlation per correlation class
/// (pairs that share the same set of common ancestors). Solved by damped
/// Gauss-Newton on log-variances with analytic path-rule derivatives.
pub fn solve_variances(graph: &TreeGraph, targets: &[CorrelationTarget]) -> Result<VarianceAssignment> {
    graph.ensure_valid()?;
    let classes = graph.correlation_classes();
    let mut assigned: Vec<Option<usize>> = vec![None; classes.len()];
    let mut pairs = Vec::with_capacity(targets.len());
    for (t_idx, t) in targets.iter().enumerate() {
        if !(t.value > 0.0 && t.value < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "target for ({}, {}) must lie in (0, 1), got {}",
                t.a, t.b, t.value
            )));
        }
        let ka = graph
            .child_index(t.a.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a child", t.a)))?;
        let kb = graph
            .child_index(t.b.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a child", t.b)))?;
        if ka == kb {
            return Err(Error::InvalidArgument(format!("target pairs `{}` with itself", t.a)));
        }
        let key = (ka.min(kb), ka.max(kb));
        let class = classes
            .iter()
            .position(|c| c.pairs.contains(&key))
            .expect("every child pair belongs to a class");
        if assigned[class].replace(t_idx).is_some() {
            return Err(Error::InvalidArgument(format!(
                "class `{}` has more than one target",
                classes[class].label()
            )));
        }
        pairs.push((key, class));
    }
    if let Some(missing) = assigned.iter().position(Option::is_none) {
        return Err(Error::InvalidArgument(format!(
            "class `{}` has no target",
            classes[missing].label()
        )));
    }

    let p = graph.latent_count();
    let chains: Vec<Vec<usize>> = (0..graph.child_count())
        .map(|c| graph.child_ancestor_indices(c))
        .collect();
    let eval = |x: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let q: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let mut r = DVector::zeros(pairs.len());
        let mut jac = DMatrix::zeros(pairs.len(), p);
        for (row, (((a, b), _), t)) in pairs.iter().zip(targets).enumerate() {
            let (ca, cb) = (&chains[*a], &chains[*b]);
            let va = 1.0 + ca.iter().map(|&l| q[l]).sum::<f64>();
            let vb = 1.0 + cb.iter().map(|&l| q[l]).sum::<f64>();
            let cov: f64 = ca.iter().filter(|l| cb.contains(l)).map(|&l| q[l]).sum();
            let root = (va * vb).sqrt();
            let rho = cov / root;
            r[row] = rho - t.value;
            for l in 0..p {
                let in_a = ca.contains(&l);
                let in_b = cb.contains(&l);
                let shared = if in_a && in_b { 1.0 / root } else { 0.0 };
                let spread = 0.5
                    * rho
                    * (if in_a { 1.0 / va } else { 0.0 } + if in_b { 1.0 / vb } else { 0.0 });
                jac[(row, l)] = q[l] * (shared - spread);
            }
        }
        (r, jac)
    };

    let mut x = vec![0.0; p];
    let (mut r, mut jac) = eval(&x);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    for _ in 0..500 {
        if r.amax() < SOLVE_TOL {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut improved = false;
        while mu < 1e12 {
            let mut sys = jtj.clone();
            for i in 0..p {
                sys[(i, i)] += mu;
            }
            let Some(ch) = nalgebra::Cholesky::new(sys) else {
                mu *= 4.0;
                continue;
            };
            let step = ch.solve(&(-&grad));
            let trial: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(xi, s)| (xi + s).clamp(-MAX_LOG_VARIANCE, MAX_LOG_VARIANCE))
                .collect();
            let (tr, tj) = eval(&trial);
            let tc = tr.norm_squared();
            if tc < cost {
                x = trial;
                r = tr;
                jac = tj;
                cost = tc;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }

    let (worst, residual) = r
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs()))
        .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    if residual > ACCEPT_TOL {
        return Err(Error::Infeasible {
            class: classes[pairs[worst].1].label(),
            residual,
        });
    }
    let q: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    Ok(VarianceAssignment::from_aligned(graph, &q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;

    const FIG1: &str = "latent p1\nchild c1 : p1\nchild c2 : p1\nchild c3 : p1";
    const FIG2: &str = "latent p1\nlatent p2 : p1\nchild c1 : p2\nchild c2 : p2\nchild c3 : p1";
    const FIG3: &str = "latent p1\nlatent p2 : p1\nlatent p3 : p1\n\
                        child c1 : p2\nchild c2 : p2\nchild c3 : p2\nchild c4 : p3";
    const P3C4: &str = "latent p1\nlatent p2 : p1\nlatent p3 : p1\nchild c1 : p2\n\
                        child c2 : p2\nchild c3 : p3\nchild c4 : p3";

    fn vars(s: &str) -> VarianceAssignment {
        VarianceAssignment::parse_inline(s).unwrap()
    }

    #[test]
    fn one_parent_precision() {
        let g = parse_graph(FIG1).unwrap();
        let q = assemble_precision(&g, &vars("p1=1")).unwrap();
        assert_eq!(q.matrix[(3, 3)], 4.0);
        for c in 0..3 {
            assert_eq!(q.matrix[(c, 3)], -1.0);
            assert_eq!(q.matrix[(c, c)], 1.0);
        }
        assert_eq!(q.matrix[(0, 1)], 0.0);
        let q = assemble_precision(&g, &vars("p1=0.5")).unwrap();
        assert_eq!(q.matrix[(3, 3)], 5.0);
    }

    #[test]
    fn two_parent_precision() {
        let g = parse_graph(FIG2).unwrap();
        let q = assemble_precision(&g, &vars("p1=1,p2=1")).unwrap();
        // order: c1 c2 c3 p1 p2
        assert_eq!(q.matrix[(4, 4)], 3.0);
        assert_eq!(q.matrix[(4, 3)], -1.0);
        assert_eq!(q.matrix[(3, 3)], 1.0 + 1.0 + 1.0);
        assert_eq!(q.matrix[(2, 3)], -1.0);
        assert_eq!(q.matrix[(2, 4)], 0.0);
    }

    #[test]
    fn three_parent_precision_root_entry() {
        let g = parse_graph(FIG3).unwrap();
        let q = assemble_precision(&g, &vars("p1=2,p2=0.5,p3=4")).unwrap();
        // order: c1..c4 p1 p2 p3
        assert!((q.matrix[(4, 4)] - (0.5 + 2.0 + 0.25)).abs() < 1e-15);
        assert!((q.matrix[(5, 5)] - (3.0 + 2.0)).abs() < 1e-15);
        assert!((q.matrix[(6, 6)] - (1.0 + 0.25)).abs() < 1e-15);
        assert_eq!(q.matrix[(5, 4)], -2.0);
        assert_eq!(q.matrix[(6, 4)], -0.25);
        assert_eq!(q.matrix[(5, 6)], 0.0);
    }

    #[test]
    fn one_parent_correlation_is_half() {
        let g = parse_graph(FIG1).unwrap();
        let c = children_correlation(&g, &vars("p1=1")).unwrap();
        assert!(c.is_exchangeable(1e-14));
        assert!((c.get("c1", "c2").unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn two_parent_correlations() {
        let g = parse_graph(FIG2).unwrap();
        let c = children_correlation(&g, &vars("p1=1,p2=1")).unwrap();
        assert!((c.get("c1", "c2").unwrap() - 2.0 / 3.0).abs() < 1e-14);
        assert!((c.get("c1", "c3").unwrap() - 1.0 / 6f64.sqrt()).abs() < 1e-14);
        assert!((c.get("c2", "c3").unwrap() - 0.408_248_290_463_863).abs() < 1e-12);
    }

    #[test]
    fn longitudinal_graph_correlations() {
        let g = parse_graph(P3C4).unwrap();
        let v = vars("p1=8,p2=1,p3=1");
        for c in [children_correlation(&g, &v).unwrap(), correlation_oracle(&g, &v).unwrap()] {
            assert!((c.get("c1", "c2").unwrap() - 0.9).abs() < 1e-13);
            assert!((c.get("c3", "c4").unwrap() - 0.9).abs() < 1e-13);
            assert!((c.get("c1", "c4").unwrap() - 0.8).abs() < 1e-13);
            assert!((c.get("c2", "c3").unwrap() - 0.8).abs() < 1e-13);
        }
    }

    #[test]
    fn oracle_matches_path_rule_by_hand() {
        let g = parse_graph(FIG3).unwrap();
        let (q1, q2, q3) = (1.3, 0.7, 2.2);
        let c = correlation_oracle(&g, &vars("p1=1.3,p2=0.7,p3=2.2")).unwrap();
        let rho2 = q1 / ((q1 + q2 + 1.0) * (q1 + q3 + 1.0f64)).sqrt();
        assert!((c.get("c1", "c4").unwrap() - rho2).abs() < 1e-15);
        let rho1 = (q1 + q2) / (q1 + q2 + 1.0);
        assert!((c.get("c2", "c3").unwrap() - rho1).abs() < 1e-15);
    }

    #[test]
    fn oracle_derivative_matches_difference() {
        let g = parse_graph(FIG3).unwrap();
        let q2 = [1.3, 0.7, 2.2];
        for l in 0..3 {
            let d = oracle_derivative(&g, &q2, l);
            let h = 1e-6;
            let (mut up, mut dn) = (q2, q2);
            up[l] += h;
            dn[l] -= h;
            let fd = (oracle_values(&g, &up) - oracle_values(&g, &dn)) / (2.0 * h);
            assert!((d - fd).amax() < 1e-8);
        }
    }

    #[test]
    fn single_child_is_one_by_one() {
        let g = parse_graph("latent p1\nchild c1 : p1").unwrap();
        let v = vars("p1=3");
        assert_eq!(correlation_oracle(&g, &v).unwrap().matrix()[(0, 0)], 1.0);
        assert_eq!(children_correlation(&g, &v).unwrap().matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn rejects_bad_variances() {
        let g = parse_graph(FIG1).unwrap();
        let err = children_correlation(&g, &vars("p1=-1")).unwrap_err();
        assert!(err.to_string().contains("variance must be positive"));
        assert!(matches!(
            children_correlation(&g, &vars("p2=1")),
            Err(Error::MissingVariance(_))
        ));
        assert!(assemble_precision(&g, &vars("p1=0")).is_err());
    }

    #[test]
    fn solve_recovers_longitudinal_variances() {
        let g = parse_graph(P3C4).unwrap();
        let targets = vec![
            CorrelationTarget::new("c1", "c2", 0.9).unwrap(),
            CorrelationTarget::new("c3", "c4", 0.9).unwrap(),
            CorrelationTarget::new("c1", "c3", 0.8).unwrap(),
        ];
        let v = solve_variances(&g, &targets).unwrap();
        assert!((v.get("p1").unwrap() - 8.0).abs() < 1e-7);
        assert!((v.get("p2").unwrap() - 1.0).abs() < 1e-7);
        assert!((v.get("p3").unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn solve_inverts_one_parent() {
        let g = parse_graph(FIG1).unwrap();
        let v = solve_variances(&g, &[CorrelationTarget::new("c2", "c3", 0.5).unwrap()]).unwrap();
        assert!((v.get("p1").unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn solve_reports_infeasible_nesting() {
        let g = parse_graph(P3C4).unwrap();
        let targets = vec![
            CorrelationTarget::new("c1", "c2", 0.5).unwrap(),
            CorrelationTarget::new("c3", "c4", 0.5).unwrap(),
            CorrelationTarget::new("c1", "c3", 0.9).unwrap(),
        ];
        assert!(matches!(solve_variances(&g, &targets), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn solve_checks_target_coverage() {
        let g = parse_graph(P3C4).unwrap();
        let only_one = vec![CorrelationTarget::new("c1", "c2", 0.9).unwrap()];
        assert!(matches!(solve_variances(&g, &only_one), Err(Error::InvalidArgument(_))));
        let twice = vec![
            CorrelationTarget::new("c1", "c3", 0.5).unwrap(),
            CorrelationTarget::new("c2", "c4", 0.5).unwrap(),
        ];
        assert!(matches!(solve_variances(&g, &twice), Err(Error::InvalidArgument(_))));
        let out_of_range = vec![CorrelationTarget::new("c1", "c2", 1.0).unwrap()];
        assert!(solve_variances(&g, &out_of_range).is_err());
    }

    #[test]
    fn scaling_to_covariance() {
        let names: Vec<NodeId> = ["a", "b"].iter().map(|n| NodeId::new(*n).unwrap()).collect();
        let c = CorrelationMatrix::identity(names);
        let s = ChildScales::parse_inline("a=2,b=3").unwrap();
        let cov = scale_to_covariance(&c, &s).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]));

        let g = parse_graph(FIG1).unwrap();
        let c = children_correlation(&g, &vars("p1=1")).unwrap();
        let s = ChildScales::parse_inline("c1=1,c2=1,c3=1").unwrap();
        assert!((scale_to_covariance(&c, &s).unwrap() - c.matrix()).amax() < 1e-15);

        let g = parse_graph(P3C4).unwrap();
        let c = correlation_oracle(&g, &vars("p1=8,p2=1,p3=1")).unwrap();
        let s = ChildScales::parse_inline("c1=1,c2=0.2,c3=0.1,c4=0.5").unwrap();
        let cov = scale_to_covariance(&c, &s).unwrap();
        assert!((cov[(0, 1)] - 0.18).abs() < 1e-13);
        assert!(scale_to_covariance(&c, &ChildScales::parse_inline("c1=1").unwrap()).is_err());
    }

    #[test]
    fn inline_parsing() {
        let v = vars(" p1 = 8 , p2=1 ");
        assert_eq!(v.get("p1"), Some(8.0));
        assert!(VarianceAssignment::parse_inline("p1=1,p1=2").is_err());
        assert!(VarianceAssignment::parse_inline("p1").is_err());
        assert!(VarianceAssignment::parse_inline("p1=x").is_err());
    }

    #[test]
    fn csv_and_json_output() {
        let g = parse_graph(FIG1).unwrap();
        let c = children_correlation(&g, &vars("p1=1")).unwrap();
        let csv = c.to_csv();
        assert!(csv.starts_with("c1,c2,c3\n1,0.5,0.5\n"));
        let js = c.to_json();
        assert_eq!(js["order"][2], "c3");
        assert!((js["matrix"][0][1].as_f64().unwrap() - 0.5).abs() < 1e-14);
    }
}
