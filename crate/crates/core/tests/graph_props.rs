mod common;

use common::*;
use graphcorr::{parse_graph, NodeId, SequenceModel, TreeGraph};
use proptest::prelude::*;

fn arb_tree() -> impl Strategy<Value = TreeGraph> {
    any::<u64>().prop_map(|s| random_tree(&mut rng(s), 12, 20))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn contraction_has_one_more_model_than_latents(g in arb_tree()) {
        let seq = g.contract(None).unwrap();
        let p = g.latent_count();
        prop_assert_eq!(seq.len(), p + 1);
        for (k, m) in seq.models().iter().enumerate() {
            prop_assert_eq!(m.latent_count(), p - k);
            if let Some(mg) = m.graph() {
                prop_assert!(mg.is_valid());
                prop_assert_eq!(mg.children(), g.children());
            }
        }
        let is_identity = matches!(seq.models()[p], SequenceModel::Identity { .. });
        prop_assert!(is_identity);
    }

    #[test]
    fn penultimate_model_is_exchangeable(g in arb_tree()) {
        let seq = g.contract(None).unwrap();
        let last = seq.models()[g.latent_count() - 1].graph().unwrap();
        prop_assert_eq!(last.latent_count(), 1);
        let root = g.root().unwrap();
        for c in last.children() {
            prop_assert_eq!(last.parent_of(c.as_str()), Some(root));
        }
    }

    #[test]
    fn serialization_round_trips(g in arb_tree()) {
        prop_assert!(g.validate().is_empty());
        prop_assert_eq!(parse_graph(&g.to_dsl()).unwrap(), g);
    }

    #[test]
    fn invalid_graphs_do_not_round_trip(g in arb_tree(), pick in any::<prop::sample::Index>()) {
        // point one child at another child
        let k = pick.index(g.child_count());
        let other = g.children()[(k + 1) % g.child_count()].clone();
        let latents = g.latents().iter().map(|l| (l.clone(), g.parent_of(l.as_str()).cloned())).collect();
        let children = g
            .children()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), if i == k { other.clone() } else { g.parent_of(c.as_str()).unwrap().clone() }))
            .collect();
        let bad = TreeGraph::from_declarations(latents, children);
        prop_assert!(!bad.validate().is_empty());
        prop_assert!(parse_graph(&bad.to_dsl()).is_err());
    }

    #[test]
    fn first_ancestor_is_parent(g in arb_tree()) {
        for n in g.latents().iter().chain(g.children()) {
            let anc = g.ancestors(n.as_str()).unwrap();
            match g.parent_of(n.as_str()) {
                Some(p) => prop_assert_eq!(&anc[0], p),
                None => prop_assert!(anc.is_empty()),
            }
            if let Some(last) = anc.last() {
                prop_assert_eq!(Some(last), g.root());
            }
        }
    }

    #[test]
    fn common_ancestors_contain_root(g in arb_tree()) {
        let root = g.root().unwrap();
        for a in g.children() {
            for b in g.children() {
                if a != b {
                    let shared = g.common_ancestors(a.as_str(), b.as_str()).unwrap();
                    prop_assert_eq!(shared.last(), Some(root));
                    let anc_a = g.ancestors(a.as_str()).unwrap();
                    let anc_b = g.ancestors(b.as_str()).unwrap();
                    let both: Vec<NodeId> = anc_a.into_iter().filter(|x| anc_b.contains(x)).collect();
                    prop_assert_eq!(shared, both);
                }
            }
        }
    }

    #[test]
    fn custom_orders_ending_at_root(g in arb_tree(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut order: Vec<NodeId> = g.latents()[1..].to_vec();
        order.shuffle(&mut rng(seed));
        order.push(g.root().unwrap().clone());
        let seq = g.contract(Some(&order)).unwrap();
        prop_assert_eq!(seq.removal_order(), &order[..]);
        prop_assert_eq!(seq.len(), g.latent_count() + 1);
        if g.latent_count() > 1 {
            let mut bad = order.clone();
            bad.rotate_right(1);
            prop_assert!(g.contract(Some(&bad)).is_err());
        }
    }
}

#[test]
fn eight_child_graph_sequence() {
    let g = parse_graph(EIGHT).unwrap();
    let seq = g.contract(None).unwrap();
    assert_eq!(seq.len(), 8);
    let order: Vec<&str> = seq.removal_order().iter().map(NodeId::as_str).collect();
    assert_eq!(order, ["p7", "p6", "p5", "p4", "p3", "p2", "p1"]);
    // graph e: c1..c4 under p2, c5..c8 under p3
    let e = seq.models()[4].graph().unwrap();
    for c in ["c1", "c2", "c3", "c4"] {
        assert_eq!(e.parent_of(c).unwrap().as_str(), "p2");
    }
    for c in ["c5", "c6", "c7", "c8"] {
        assert_eq!(e.parent_of(c).unwrap().as_str(), "p3");
    }
    let f = seq.models()[5].graph().unwrap();
    assert_eq!(f.parent_of("c5").unwrap().as_str(), "p1");
    assert_eq!(f.parent_of("c1").unwrap().as_str(), "p2");
}

#[test]
fn small_sequences() {
    let g = parse_graph(FIG2).unwrap();
    let seq = g.contract(None).unwrap();
    assert_eq!(seq.len(), 3);
    assert_eq!(seq.models()[1].latent_count(), 1);
    let one = parse_graph(FIG1).unwrap().contract(None).unwrap();
    assert_eq!(one.len(), 2);
    assert!(matches!(one.models()[1], SequenceModel::Identity { .. }));
}

#[test]
fn ancestor_examples() {
    let g = parse_graph(FIG3).unwrap();
    let names = |v: Vec<NodeId>| v.into_iter().map(String::from).collect::<Vec<_>>();
    assert_eq!(names(g.ancestors("c1").unwrap()), ["p2", "p1"]);
    assert_eq!(names(g.ancestors("c4").unwrap()), ["p3", "p1"]);
    assert!(g.ancestors("p1").unwrap().is_empty());
    assert_eq!(names(g.common_ancestors("c1", "c2").unwrap()), ["p2", "p1"]);
    assert_eq!(names(g.common_ancestors("c1", "c4").unwrap()), ["p1"]);
    let f1 = parse_graph(FIG1).unwrap();
    assert_eq!(names(f1.common_ancestors("c1", "c2").unwrap()), ["p1"]);
}
