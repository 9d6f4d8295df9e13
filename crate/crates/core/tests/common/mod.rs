#![allow(dead_code)]

use graphcorr::{parse_graph, TreeGraph, VarianceAssignment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random rooted tree with up to `max_latents` latents and between 2 and
/// `max_children` children. Every latent has at least one child below it.
pub fn random_tree<R: Rng>(rng: &mut R, max_latents: usize, max_children: usize) -> TreeGraph {
    random_tree_with(rng, max_latents, max_children, 1)
}

/// As [`random_tree`], with `per_leaf` children under every latent that has
/// no latent below it.
pub fn random_tree_with<R: Rng>(rng: &mut R, max_latents: usize, max_children: usize, per_leaf: usize) -> TreeGraph {
    let p = rng.random_range(1..=max_latents);
    let mut parents = vec![None];
    for i in 1..p {
        parents.push(Some(rng.random_range(0..i)));
    }
    let leaves: Vec<usize> = (0..p).filter(|i| !parents.contains(&Some(*i))).collect();
    let base = (leaves.len() * per_leaf).max(2);
    let k = rng.random_range(base..=max_children.max(base));
    let mut child_parent: Vec<usize> = leaves.iter().flat_map(|&l| std::iter::repeat_n(l, per_leaf)).collect();
    while child_parent.len() < k {
        child_parent.push(rng.random_range(0..p));
    }
    let mut text = String::new();
    for (i, par) in parents.iter().enumerate() {
        match par {
            Some(j) => text.push_str(&format!("latent p{} : p{}\n", i + 1, j + 1)),
            None => text.push_str(&format!("latent p{}\n", i + 1)),
        }
    }
    for (c, par) in child_parent.iter().enumerate() {
        text.push_str(&format!("child c{} : p{}\n", c + 1, par + 1));
    }
    parse_graph(&text).expect("generated graphs are valid")
}

pub fn random_variances<R: Rng>(rng: &mut R, g: &TreeGraph, lo: f64, hi: f64) -> VarianceAssignment {
    g.latents()
        .iter()
        .map(|l| (l.clone(), rng.random_range(lo..hi)))
        .collect()
}

pub const FIG1: &str = "latent p1\nchild c1 : p1\nchild c2 : p1\nchild c3 : p1\n";
pub const TWO_CHILD: &str = "latent p1\nchild c1 : p1\nchild c2 : p1\n";
pub const FIG2: &str = "latent p1\nlatent p2 : p1\nchild c1 : p2\nchild c2 : p2\nchild c3 : p1\n";
pub const FIG3: &str = "latent p1\nlatent p2 : p1\nlatent p3 : p1\nchild c1 : p2\nchild c2 : p2\nchild c3 : p3\nchild c4 : p3\n";
pub const EIGHT: &str = "\
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

pub fn assign(pairs: &[(&str, f64)]) -> VarianceAssignment {
    pairs
        .iter()
        .map(|(n, v)| (graphcorr::NodeId::new(*n).unwrap(), *v))
        .collect()
}

/// Path-rule correlation of children `a`, `b` with the given variances;
/// latents missing from `v` count as zero.
pub fn path_rule(g: &TreeGraph, v: &VarianceAssignment, a: &str, b: &str) -> f64 {
    let q = |n: &graphcorr::NodeId| v.get(n.as_str()).unwrap_or(0.0);
    let var = |c: &str| 1.0 + g.ancestors(c).unwrap().iter().map(q).sum::<f64>();
    let cov: f64 = g.common_ancestors(a, b).unwrap().iter().map(q).sum();
    cov / (var(a) * var(b)).sqrt()
}

/// Two-sided Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Variances of the latents of `g` other than `removed`.
pub fn remaining(g: &TreeGraph, v: &VarianceAssignment, removed: &str) -> VarianceAssignment {
    g.latents()
        .iter()
        .filter(|l| l.as_str() != removed)
        .map(|l| (l.clone(), v.get(l.as_str()).unwrap()))
        .collect()
}

/// `∫ π(ξ) dξ` over `[1e-10, 1e12]` by composite Simpson in `θ = log ξ`.
pub fn step_mass(profile: &graphcorr::StepProfile, lambda: f64) -> f64 {
    use graphcorr::{DensityMode, Parametrization};
    let (a, b) = (1e-10f64.ln(), 1e12f64.ln());
    let n = 20_000;
    let h = (b - a) / n as f64;
    let f = |t: f64| {
        profile
            .log_density(t.exp(), lambda, DensityMode::Exact, Parametrization::LogVariance)
            .unwrap()
            .log_density
            .exp()
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
