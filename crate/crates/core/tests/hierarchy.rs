mod common;

use common::{brute_force_adjacency, four_node, random_tree};
use hhar::diffcore::{seed_rng, Tape, Tensor};
use hhar::hierarchy::{adaptive_adjacency, normalize_adjacency, predefined_adjacency};
use hhar::LabelHierarchy;
use proptest::prelude::*;

#[test]
fn adjacency_matches_set_enumeration_on_random_trees() {
    let mut rng = seed_rng(20);
    for n in 1..=50 {
        let h = random_tree(n, &mut rng);
        let a = predefined_adjacency(&h);
        let oracle = brute_force_adjacency(&h);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(a.at(i, j), oracle[i][j], "n={n} ({i},{j})");
            }
        }
    }
}

#[test]
fn bundled_hierarchies_have_expected_shape() {
    let d = LabelHierarchy::daliac();
    assert_eq!(d.leaves().count(), 13);
    assert_eq!(d.len(), 17);
    let h = LabelHierarchy::hapt();
    assert_eq!(h.leaves().count(), 12);
    for v in 0..d.len() {
        assert!(d.depth(v) <= 2);
    }
}

#[test]
fn adaptive_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(&[3, 2]));
    let a = adaptive_adjacency(&mut tape, z, z).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

    let mut tape = Tape::new();
    let e = tape.constant(Tensor::identity(2));
    let a = adaptive_adjacency(&mut tape, e, e).unwrap();
    let v = tape.value(a);
    assert!((v.at(0, 0) - 0.7311).abs() < 1e-4 && (v.at(0, 1) - 0.2689).abs() < 1e-4);
    assert!((v.at(1, 1) - 0.7311).abs() < 1e-4 && (v.at(1, 0) - 0.2689).abs() < 1e-4);

    let mut tape = Tape::new();
    let (x, y) = (tape.constant(Tensor::zeros(&[3, 2])), tape.constant(Tensor::zeros(&[2, 2])));
    assert!(adaptive_adjacency(&mut tape, x, y).is_err());
}

#[test]
fn four_node_label_sets() {
    let h = four_node();
    let idx = |n: &str| h.index_of(n).unwrap();
    let s = h.expand_label_set("sitting").unwrap();
    assert!(s[idx("still")] && s[idx("sitting")] && !s[idx("walking")] && !s[idx("standing")]);
    let w = h.expand_label_set("walking").unwrap();
    assert_eq!(w.iter().filter(|&&b| b).count(), 1);
    assert_eq!(h.expand_label_set("standing").unwrap().iter().filter(|&&b| b).count(), 2);
    assert!(h.expand_label_set("running").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_bounded_with_equality_iff_subset(seed in any::<u64>(), n in 1usize..30) {
        let h = random_tree(n, &mut seed_rng(seed));
        let a = predefined_adjacency(&h);
        for i in 0..n {
            prop_assert_eq!(a.at(i, i), 0.0);
            for j in 0..n {
                if i == j { continue; }
                let v = a.at(i, j);
                prop_assert!(v > 0.0 && v <= 1.0);
                let subset = h.ancestors(i).iter().all(|x| h.ancestors(j).contains(x));
                prop_assert_eq!(v == 1.0, subset);
            }
        }
    }

    #[test]
    fn label_set_popcount_is_depth(seed in any::<u64>(), n in 1usize..30) {
        let h = random_tree(n, &mut seed_rng(seed));
        for v in 0..n {
            let set = h.label_set(v);
            prop_assert_eq!(set.iter().filter(|&&b| b).count(), h.depth(v));
            prop_assert_eq!(h.terminal_of(&set), Some(v));
        }
    }

    #[test]
    fn normalized_graph_is_finite_with_unit_diagonal(seed in any::<u64>(), n in 1usize..30) {
        let h = random_tree(n, &mut seed_rng(seed));
        let norm = normalize_adjacency(&predefined_adjacency(&h)).unwrap();
        prop_assert!(norm.is_finite());
        for i in 0..n {
            prop_assert!(norm.at(i, i) >= 1.0);
        }
    }

    #[test]
    fn adaptive_rows_are_stochastic(
        values in proptest::collection::vec(-5.0f64..5.0, 2 * 6 * 4),
    ) {
        let mut tape = Tape::new();
        let e1 = tape.leaf(Tensor::new(&[6, 4], values[..24].to_vec()).unwrap());
        let e2 = tape.leaf(Tensor::new(&[6, 4], values[24..].to_vec()).unwrap());
        let a = adaptive_adjacency(&mut tape, e1, e2).unwrap();
        for row in tape.value(a).rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
