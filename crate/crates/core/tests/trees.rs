mod support;

use proptest::prelude::*;
use support::{compare_trees, oracle_fit, small_problem};
use triboost::tree::{fit_tree, leaf_value, normalize_weights, Node};
use triboost::{LeafConstraint, Matrix, RegressionTree, TreeConfig};

#[test]
fn exhaustive_search_agrees_on_random_problems() {
    for seed in 0..300 {
        let pb = small_problem(seed);
        let tree = fit_tree(&pb.matrix(), &pb.targets, &pb.weights, &pb.config).unwrap();
        if let Err(diff) = compare_trees(&tree, &oracle_fit(&pb)) {
            panic!("seed {seed} ({:?}): {diff}", pb.config);
        }
    }
}

#[test]
fn duplicated_feature_ties_go_to_lowest_index() {
    let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![f64::from(i), f64::from(i), f64::from(i % 3)]).collect();
    let t: Vec<f64> = (0..12).map(|i| if i < 6 { -1.0 } else { 2.0 }).collect();
    let tree = fit_tree(&Matrix::from_rows(&rows).unwrap(), &t, &[1.0; 12], &TreeConfig::new(1, LeafConstraint::RawCount, 1.0)).unwrap();
    match tree.node(0) {
        Node::Split { feature, threshold, .. } => {
            assert_eq!(feature, 0);
            assert_eq!(threshold, 5.5);
        }
        other => panic!("expected a split, got {other:?}"),
    }
}

fn structure(tree: &RegressionTree) -> Vec<(usize, u64)> {
    (0..tree.num_nodes())
        .filter_map(|i| match tree.node(i) {
            Node::Split { feature, threshold, .. } => Some((feature, threshold.to_bits())),
            Node::Leaf { .. } => None,
        })
        .collect()
}

fn leaf_values(tree: &RegressionTree) -> Vec<f64> {
    tree.leaves().map(|l| tree.leaf_value(l)).collect()
}

proptest! {
    #[test]
    fn leaf_value_zeroes_the_weighted_residual(
        data in prop::collection::vec((-1e3f64..1e3, 1e-3f64..1e3), 1..50)
    ) {
        let (t, w): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
        let c = leaf_value(&t, &w).unwrap();
        let resid: f64 = t.iter().zip(&w).map(|(t, w)| w * (t - c)).sum();
        let scale: f64 = t.iter().zip(&w).map(|(t, w)| (w * t).abs()).sum::<f64>().max(1.0);
        prop_assert!(resid.abs() <= 1e-12 * scale, "residual {resid}");
    }

    #[test]
    fn normalized_weights_sum_to_count(w in prop::collection::vec(1e-20f64..1e20, 1..200)) {
        let out = normalize_weights(&w).unwrap();
        let n = w.len() as f64;
        prop_assert!((out.iter().sum::<f64>() - n).abs() <= 1e-12 * n);
    }

    #[test]
    fn equivalent_weighted_is_scale_free(seed in 0u64..10_000, lambda in 1e-6f64..1e6) {
        let mut pb = small_problem(seed);
        pb.config.leaf_constraint = LeafConstraint::EquivalentWeighted;
        let x = pb.matrix();
        let a = fit_tree(&x, &pb.targets, &pb.weights, &pb.config).unwrap();
        let scaled: Vec<f64> = pb.weights.iter().map(|w| w * lambda).collect();
        let b = fit_tree(&x, &pb.targets, &scaled, &pb.config).unwrap();
        prop_assert_eq!(structure(&a), structure(&b));
        for (u, v) in leaf_values(&a).iter().zip(leaf_values(&b)) {
            prop_assert!(support::rel_err(*u, v) <= 1e-12);
        }
    }

    #[test]
    fn hessian_sum_scaling_matches_rescaled_minimum(seed in 0u64..10_000, lambda in 1e-3f64..1e3) {
        // scaling the weights by lambda is the same as dividing S by lambda
        let mut pb = small_problem(seed);
        pb.config.leaf_constraint = LeafConstraint::RawHessianSum;
        let x = pb.matrix();
        let scaled: Vec<f64> = pb.weights.iter().map(|w| w * lambda).collect();
        let a = fit_tree(&x, &pb.targets, &scaled, &pb.config).unwrap();
        let mut rescaled = pb.config.clone();
        rescaled.min_per_leaf /= lambda;
        let b = fit_tree(&x, &pb.targets, &pb.weights, &rescaled).unwrap();
        prop_assert_eq!(structure(&a), structure(&b));
    }

    #[test]
    fn accepted_splits_have_positive_gain(seed in 0u64..10_000) {
        let pb = small_problem(seed);
        let tree = fit_tree(&pb.matrix(), &pb.targets, &pb.weights, &pb.config).unwrap();
        for i in 0..tree.num_nodes() {
            if let Node::Split { gain, .. } = tree.node(i) {
                prop_assert!(gain > 0.0);
            }
        }
        prop_assert!(tree.depth() <= pb.config.max_depth);
    }
}
