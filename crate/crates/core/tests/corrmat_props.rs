mod common;

use common::*;
use graphcorr::{
    children_correlation, correlation_oracle, parse_graph, scale_to_covariance, solve_variances, ChildScales,
    CorrelationTarget, NodeId, SequenceModel, TreeGraph, VarianceAssignment,
};
use proptest::prelude::*;

fn arb_case() -> impl Strategy<Value = (TreeGraph, VarianceAssignment)> {
    any::<u64>().prop_map(|s| {
        let mut r = rng(s);
        let g = random_tree(&mut r, 12, 20);
        let v = random_variances(&mut r, &g, 0.05, 20.0);
        (g, v)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inversion_matches_path_rule((g, v) in arb_case()) {
        let inv = children_correlation(&g, &v).unwrap();
        let ora = correlation_oracle(&g, &v).unwrap();
        let k = g.child_count();
        for i in 0..k {
            prop_assert!((inv.matrix()[(i, i)] - 1.0).abs() <= 1e-12);
            for j in 0..k {
                prop_assert!((inv.matrix()[(i, j)] - ora.matrix()[(i, j)]).abs() <= 1e-10);
                if i != j {
                    let want = path_rule(&g, &v, g.children()[i].as_str(), g.children()[j].as_str());
                    prop_assert!((ora.matrix()[(i, j)] - want).abs() <= 1e-14);
                }
            }
        }
        prop_assert!(inv.min_eigenvalue() > 0.0);
    }

    #[test]
    fn one_latent_graphs_are_exchangeable(k in 2usize..15, q2 in 0.01f64..50.0) {
        let mut text = String::from("latent p1\n");
        for c in 0..k {
            text.push_str(&format!("child c{c} : p1\n"));
        }
        let g = parse_graph(&text).unwrap();
        let c = children_correlation(&g, &assign(&[("p1", q2)])).unwrap();
        prop_assert!(c.is_exchangeable(1e-14));
        prop_assert!((c.matrix()[(0, 1)] - q2 / (1.0 + q2)).abs() < 1e-13);
    }

    #[test]
    fn contraction_is_monotone((g, v) in arb_case()) {
        let seq = g.contract(None).unwrap();
        let models = seq.models();
        for (k, removed) in seq.removal_order().iter().enumerate() {
            let flex = models[k].graph().unwrap();
            let base = &models[k + 1];
            for a in 0..g.child_count() {
                for b in a + 1..g.child_count() {
                    let (ca, cb) = (g.children()[a].as_str(), g.children()[b].as_str());
                    let before = path_rule(flex, &v, ca, cb);
                    let after = match base {
                        SequenceModel::Graph(h) => path_rule(h, &v, ca, cb),
                        SequenceModel::Identity { .. } => 0.0,
                    };
                    let anc_a = flex.ancestors(ca).unwrap();
                    let anc_b = flex.ancestors(cb).unwrap();
                    if flex.common_ancestors(ca, cb).unwrap().contains(removed) {
                        prop_assert!(after <= before + 1e-15);
                    } else if !anc_a.contains(removed) && !anc_b.contains(removed) {
                        prop_assert!((after - before).abs() <= 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn solving_recovers_class_correlations((g, v) in arb_case()) {
        let c = correlation_oracle(&g, &v).unwrap();
        let targets: Vec<CorrelationTarget> = g
            .correlation_classes()
            .iter()
            .map(|cl| {
                let (a, b) = cl.pairs[0];
                CorrelationTarget::new(g.children()[a].as_str(), g.children()[b].as_str(), c.matrix()[(a, b)]).unwrap()
            })
            .collect();
        let solved = solve_variances(&g, &targets).unwrap();
        let back = correlation_oracle(&g, &solved).unwrap();
        for cl in g.correlation_classes() {
            let (a, b) = cl.pairs[0];
            prop_assert!((back.matrix()[(a, b)] - c.matrix()[(a, b)]).abs() <= 1e-8);
        }
    }

    #[test]
    fn covariance_scales_rows_and_columns((g, v) in arb_case(), seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let c = correlation_oracle(&g, &v).unwrap();
        let s: ChildScales = g.children().iter().map(|n| (n.clone(), r.random_range(0.1..5.0))).collect();
        let cov = scale_to_covariance(&c, &s).unwrap();
        for (i, a) in g.children().iter().enumerate() {
            for (j, b) in g.children().iter().enumerate() {
                let want = c.matrix()[(i, j)] * s.get(a.as_str()).unwrap() * s.get(b.as_str()).unwrap();
                prop_assert!((cov[(i, j)] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn worked_examples() {
    let fig1 = parse_graph(FIG1).unwrap();
    let c = children_correlation(&fig1, &assign(&[("p1", 1.0)])).unwrap();
    assert!(c.is_exchangeable(1e-15) && (c.matrix()[(0, 1)] - 0.5).abs() < 1e-15);

    let fig2 = parse_graph(FIG2).unwrap();
    let c = children_correlation(&fig2, &assign(&[("p1", 1.0), ("p2", 1.0)])).unwrap();
    assert!((c.get("c1", "c2").unwrap() - 2.0 / 3.0).abs() < 1e-14);
    assert!((c.get("c1", "c3").unwrap() - 1.0 / 6f64.sqrt()).abs() < 1e-14);

    let fig3 = parse_graph(FIG3).unwrap();
    let v = assign(&[("p1", 8.0), ("p2", 1.0), ("p3", 1.0)]);
    let c = children_correlation(&fig3, &v).unwrap();
    assert!((c.get("c1", "c2").unwrap() - 0.9).abs() < 1e-14);
    assert!((c.get("c3", "c4").unwrap() - 0.9).abs() < 1e-14);
    assert!((c.get("c1", "c4").unwrap() - 0.8).abs() < 1e-14);
    let s = ChildScales::parse_inline("c1=1,c2=0.2,c3=0.1,c4=0.5").unwrap();
    assert!((scale_to_covariance(&c, &s).unwrap()[(0, 1)] - 0.18).abs() < 1e-15);

    let single = parse_graph("latent p1\nchild c1 : p1").unwrap();
    assert_eq!(correlation_oracle(&single, &assign(&[("p1", 3.0)])).unwrap().matrix()[(0, 0)], 1.0);
}

#[test]
fn solver_examples() {
    let fig3 = parse_graph(FIG3).unwrap();
    let t = |a, b, v| CorrelationTarget::new(a, b, v).unwrap();
    let v = solve_variances(&fig3, &[t("c1", "c2", 0.9), t("c3", "c4", 0.9), t("c1", "c3", 0.8)]).unwrap();
    for (n, want) in [("p1", 8.0), ("p2", 1.0), ("p3", 1.0)] {
        assert!((v.get(n).unwrap() - want).abs() < 1e-8);
    }
    assert!(solve_variances(&fig3, &[t("c1", "c2", 0.5), t("c3", "c4", 0.5), t("c1", "c3", 0.9)]).is_err());
    let fig1 = parse_graph(FIG1).unwrap();
    let v = solve_variances(&fig1, &[t("c1", "c2", 0.5)]).unwrap();
    assert!((v.get("p1").unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn contraction_formula_table() {
    let g = parse_graph(EIGHT).unwrap();
    let seq = g.contract(None).unwrap();
    let (e, f, gg) = (
        seq.models()[4].graph().unwrap(),
        seq.models()[5].graph().unwrap(),
        seq.models()[6].graph().unwrap(),
    );
    let grid = [0.5, 1.0, 2.0, 5.0, 10.0];
    for &q1 in &grid {
        for q2 in (1..=20).map(|i| i as f64 * 0.5) {
            for &q3 in &[0.5, 2.0, 7.0] {
                let v: VarianceAssignment =
                    [("p1", q1), ("p2", q2), ("p3", q3)].iter().map(|(n, x)| (NodeId::new(*n).unwrap(), *x)).collect();
                let ce = correlation_oracle(e, &v).unwrap();
                let cf = correlation_oracle(f, &v).unwrap();
                let cg = correlation_oracle(gg, &v).unwrap();
                let r12 = (q1 + q2) / (1.0 + q1 + q2);
                assert!((ce.get("c1", "c2").unwrap() - r12).abs() < 1e-10);
                assert!((cf.get("c1", "c2").unwrap() - r12).abs() < 1e-10);
                let r15e = q1 / ((1.0 + q1 + q2).sqrt() * (1.0 + q1 + q3).sqrt());
                let r15f = q1 / ((1.0 + q1 + q2).sqrt() * (1.0 + q1).sqrt());
                assert!((ce.get("c1", "c5").unwrap() - r15e).abs() < 1e-10);
                assert!((cf.get("c1", "c5").unwrap() - r15f).abs() < 1e-10);
                assert!((ce.get("c5", "c6").unwrap() - (q1 + q3) / (1.0 + q1 + q3)).abs() < 1e-10);
                assert!((cf.get("c5", "c6").unwrap() - q1 / (1.0 + q1)).abs() < 1e-10);
                assert!(cg.is_exchangeable(1e-12));
                assert!((cg.get("c1", "c8").unwrap() - q1 / (1.0 + q1)).abs() < 1e-10);
            }
        }
    }
}
