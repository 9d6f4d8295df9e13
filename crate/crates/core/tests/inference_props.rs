mod common;

use common::*;
use graphcorr::inference::*;
use graphcorr::{parse_graph, PCPriorSpec};
use rand::Rng;

fn linear_data(n: usize, seed: u64) -> (Scenario, SimulatedData) {
    let sc = Scenario::linear();
    let sim = simulate_dataset(&sc.spec, &sc.truths, n, &sc.times, seed).unwrap();
    (sc, sim)
}

fn perturbed(p: &ParameterVector) -> ParameterVector {
    let up = |v: &[f64]| v.iter().map(|x| x + 0.5).collect::<Vec<_>>();
    ParameterVector {
        beta: p.beta.clone(),
        log_sigma_c: up(&p.log_sigma_c),
        theta: up(&p.theta),
        log_sigma_eps: up(&p.log_sigma_eps),
    }
}

#[test]
fn truth_beats_perturbed_parameters() {
    let mut wins = 0;
    for seed in 0..100 {
        let (sc, sim) = linear_data(50, seed);
        let at_truth = marginal_loglik(&sim.dataset, &sc.spec, &sim.truth).unwrap();
        let off = marginal_loglik(&sim.dataset, &sc.spec, &perturbed(&sim.truth)).unwrap();
        if at_truth > off {
            wins += 1;
        }
    }
    assert!(wins >= 95, "{wins}/100");
}

#[test]
fn gradient_step_is_consistent() {
    let (sc, sim) = linear_data(40, 5);
    let lik = Likelihood::new(&sim.dataset, &sc.spec).unwrap();
    let layout = sc.spec.layout();
    let f = |x: &[f64]| lik.loglik(&layout.split(x).unwrap()).unwrap();
    let mut r = rng(6);
    let x0 = sim.truth.to_vec();
    for _ in 0..10 {
        let x: Vec<f64> = x0.iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
        let g = graphcorr::inference::optimize::fd_gradient(&f, &x, 1e-6);
        for i in 0..x.len() {
            // five-point stencil with a coarser step as the oracle
            let h = 1e-3 * x[i].abs().max(1.0);
            let at = |s: f64| {
                let mut y = x.clone();
                y[i] += s * h;
                f(&y)
            };
            let o = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
            assert!((g[i] - o).abs() <= 1e-4 * o.abs().max(1.0), "coordinate {i}: {} vs {o}", g[i]);
        }
    }
}

#[test]
fn within_pair_correlation_over_replicates() {
    let mut sums = [0.0; 2];
    for seed in 0..50 {
        let (_, sim) = linear_data(200, 1000 + seed);
        let col = |k: usize| sim.random_effects.iter().map(|b| b[k]).collect::<Vec<_>>();
        for (s, (a, b)) in sums.iter_mut().zip([(0, 1), (2, 3)]) {
            *s += pearson(&col(a), &col(b));
        }
    }
    for s in sums {
        let mean = s / 50.0;
        assert!((mean - 0.9).abs() <= 0.02, "{mean}");
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn balanced_intercepts_give_marker_means() {
    let g = parse_graph(TWO_CHILD).unwrap();
    let spec = ModelSpec::new(
        g,
        vec![MarkerSpec::new("m1", 0, 0), MarkerSpec::new("m2", 0, 0)],
        ResidualStructure::PerMarker,
    )
    .unwrap();
    let truths: Truths = [
        ("beta[m1:intercept]", 1.3),
        ("beta[m2:intercept]", -0.4),
        ("sigma_c[c1]", 0.1),
        ("sigma_c[c2]", 0.1),
        ("rho[c1,c2]", 0.5),
        ("sigma_eps[m1]", 0.2),
        ("sigma_eps[m2]", 0.2),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), *v))
    .collect();
    let times: Vec<f64> = (0..5).map(f64::from).collect();
    let sim = simulate_dataset(&spec, &truths, 50, &times, 4).unwrap();
    let fit = map_fit(&sim.dataset, &spec, &PCPriorSpec::default(), None).unwrap();
    assert!(fit.converged);
    for (k, m) in ["m1", "m2"].iter().enumerate() {
        let ys: Vec<f64> = sim
            .dataset
            .individuals
            .iter()
            .flat_map(|i| i.observations.iter().filter(|o| o.marker == *m).map(|o| o.y))
            .collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!((fit.params.beta[k] - mean).abs() < 1e-6, "{} vs {mean}", fit.params.beta[k]);
    }
}

#[test]
fn restarting_at_the_mode_stays_there() {
    let (sc, sim) = linear_data(60, 8);
    let prior = PCPriorSpec::default();
    let first = map_fit(&sim.dataset, &sc.spec, &prior, None).unwrap();
    assert!(first.converged);
    let again = map_fit(&sim.dataset, &sc.spec, &prior, Some(&first.params)).unwrap();
    let (a, b) = (first.params.to_vec(), again.params.to_vec());
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-6, "{gap}");
}

#[test]
fn sampler_contract() {
    let (sc, sim) = linear_data(60, 9);
    let prior = PCPriorSpec::default();
    let map = map_fit(&sim.dataset, &sc.spec, &prior, None).unwrap();
    let a = mh_sample(&sim.dataset, &sc.spec, &prior, &map.params, 4000, 21).unwrap();
    let b = mh_sample(&sim.dataset, &sc.spec, &prior, &map.params, 4000, 21).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.summaries, b.summaries);
    assert!(a.acceptance_rate >= 0.1 && a.acceptance_rate <= 0.5, "{}", a.acceptance_rate);
    assert_eq!(a.samples.len(), 2400);
    for s in &a.summaries {
        assert!(s.lower <= s.mean && s.mean <= s.upper, "{s:?}");
        if s.name.starts_with("rho[") {
            assert!(s.lower > 0.0 && s.upper < 1.0);
        }
    }
}

#[test]
fn dataset_csv_round_trip() {
    let (_, sim) = linear_data(7, 10);
    let text = sim.dataset.to_csv_string();
    assert!(text.starts_with("id,marker,time,y,x_bin,x_con\n"));
    let back = LongitudinalDataset::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.n_individuals(), 7);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-11 * a.abs().max(1.0);
    for (x, y) in back.individuals.iter().zip(&sim.dataset.individuals) {
        assert_eq!(x.id, y.id);
        for (o, p) in x.observations.iter().zip(&y.observations) {
            assert_eq!(o.marker, p.marker);
            assert!(close(o.time, p.time) && close(o.y, p.y) && close(o.x_bin, p.x_bin) && close(o.x_con, p.x_con));
        }
    }
    assert_eq!(back.to_csv_string(), text);
}

#[test]
fn log_posterior_adds_up_on_random_draws() {
    let (sc, sim) = linear_data(30, 11);
    let post = Posterior::new(&sim.dataset, &sc.spec, &PCPriorSpec::default()).unwrap();
    let mut r = rng(12);
    let x0 = sim.truth.to_vec();
    for _ in 0..1000 {
        let x: Vec<f64> = x0.iter().map(|v| v + r.random_range(-1.5..1.5)).collect();
        let p = post.layout().split(&x).unwrap();
        let parts = post.parts(&p).unwrap();
        let total = log_posterior(&sim.dataset, &sc.spec, &p, &PCPriorSpec::default()).unwrap();
        assert!(total.is_finite());
        let sum = parts.loglik + parts.log_prior_theta + parts.log_prior_scales + parts.log_prior_beta;
        assert!((total - sum).abs() <= 1e-12 * total.abs().max(1.0));
    }
}
