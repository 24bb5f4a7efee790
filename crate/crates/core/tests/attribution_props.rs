mod common;

use common::*;
use proptest::prelude::*;
use tokenshap_core::attribution::{
    build_tree, exact_shapley, owen_exact, partition_attribute, permutation_shapley, ExplainConfig, PartitionTree,
    TreeShape,
};
use tokenshap_core::model::BuiltinModel;

fn cfg() -> ExplainConfig {
    ExplainConfig::default()
}

/// `n` tokens, `k` classes, weights in [-2, 2] with roughly a third zeroed.
fn model_parts() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=7, 2usize..=3).prop_flat_map(|(n, k)| {
        (
            Just(n),
            prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), -2.0..2.0f64], n), k),
            prop::collection::vec(-1.0..1.0f64, k),
        )
    })
}

fn random_shape(n: usize) -> impl Strategy<Value = TreeShape> {
    Just((0..n).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_flat_map(|order| {
            let seeds = prop::collection::vec(any::<u64>(), order.len());
            (Just(order), seeds)
        })
        .prop_map(|(order, seeds)| {
            fn split(items: &[usize], seeds: &[u64]) -> TreeShape {
                if items.len() == 1 {
                    return TreeShape::Leaf(items[0]);
                }
                let cut = 1 + (seeds[0] as usize) % (items.len() - 1);
                TreeShape::join(split(&items[..cut], &seeds[1..]), split(&items[cut..], &seeds[1..]))
            }
            split(&order, &seeds)
        })
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

fn oracle_column(phi: &[Vec<f64>], class: usize) -> Vec<f64> {
    phi.iter().map(|row| row[class]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_permutation_enumeration((n, w, base) in model_parts(), softmax in any::<bool>()) {
        let kind = if softmax { "keyword-softmax" } else { "keyword-score" };
        let model = keyword_model(kind, &w, &base);
        let u = utterance(n);
        let oracle = shapley_oracle(&model, &u);
        let r = exact_shapley(&model, &u, &cfg()).unwrap();
        for (c, class) in r.classes.iter().enumerate() {
            assert_close(&class.phi, &oracle_column(&oracle, c), 1e-12);
        }
    }

    #[test]
    fn owen_and_partition_match_ordering_oracle((n, w, base) in model_parts(), softmax in any::<bool>(), seed in any::<u64>()) {
        let kind = if softmax { "keyword-softmax" } else { "keyword-score" };
        let model = keyword_model(kind, &w, &base);
        let u = utterance(n);
        let shape = bisection(0, n);
        let tree = build_tree(&u).unwrap();
        prop_assert_eq!(tree.to_string(), PartitionTree::from_shape(n, &shape).unwrap().to_string());
        let oracle = owen_oracle(&model, &u, &shape);
        let owen = owen_exact(&model, &u, &tree, &cfg()).unwrap();
        for (c, class) in owen.classes.iter().enumerate() {
            assert_close(&class.phi, &oracle_column(&oracle, c), 1e-12);
        }
        // Additive games: every explainer recovers the weights.
        if !softmax {
            let part = partition_attribute(&model, &u, &tree, &cfg()).unwrap();
            let perm = permutation_shapley(&model, &u, 3, seed, &cfg()).unwrap();
            for c in 0..w.len() {
                assert_close(&part.classes[c].phi, &w[c], 1e-12);
                assert_close(&owen.classes[c].phi, &w[c], 1e-12);
                assert_close(&perm.classes[c].phi, &w[c], 1e-12);
            }
        }
    }

    #[test]
    fn owen_on_random_trees(((n, w, base), shape) in model_parts().prop_flat_map(|p| {
        let n = p.0;
        (Just(p), random_shape(n))
    })) {
        let model = keyword_model("keyword-softmax", &w, &base);
        let u = utterance(n);
        let tree = PartitionTree::from_shape(n, &shape).unwrap();
        let oracle = owen_oracle(&model, &u, &shape);
        let owen = owen_exact(&model, &u, &tree, &cfg()).unwrap();
        for (c, class) in owen.classes.iter().enumerate() {
            assert_close(&class.phi, &oracle_column(&oracle, c), 1e-12);
        }
    }

    #[test]
    fn efficiency_everywhere((n, w, base) in model_parts(), seed in any::<u64>()) {
        let model = keyword_model("keyword-softmax", &w, &base);
        let u = utterance(n);
        let tree = build_tree(&u).unwrap();
        let results = [
            exact_shapley(&model, &u, &cfg()).unwrap(),
            owen_exact(&model, &u, &tree, &cfg()).unwrap(),
            partition_attribute(&model, &u, &tree, &cfg()).unwrap(),
            permutation_shapley(&model, &u, 5, seed, &cfg()).unwrap(),
        ];
        for r in &results {
            for c in &r.classes {
                prop_assert!(c.efficiency_gap().abs() <= 1e-9, "{} {}", r.method, c.efficiency_gap());
            }
        }
    }

    #[test]
    fn dummy_tokens_get_zero((n, mut w, base) in model_parts(), dummy in 0usize..7, seed in any::<u64>()) {
        let dummy = dummy % n;
        for row in &mut w {
            row[dummy] = 0.0;
        }
        let model = keyword_model("keyword-softmax", &w, &base);
        let u = utterance(n);
        let tree = build_tree(&u).unwrap();
        let results = [
            exact_shapley(&model, &u, &cfg()).unwrap(),
            owen_exact(&model, &u, &tree, &cfg()).unwrap(),
            permutation_shapley(&model, &u, 4, seed, &cfg()).unwrap(),
        ];
        for r in &results {
            for c in &r.classes {
                prop_assert!(c.phi[dummy].abs() <= 1e-12, "{}: {}", r.method, c.phi[dummy]);
            }
        }
    }

    #[test]
    fn symmetric_tokens_share_credit((n, w, base) in model_parts(), softmax in any::<bool>()) {
        prop_assume!(n >= 2);
        // t0 and t1 play identical roles once their weights are equal.
        let mut w = w;
        for row in &mut w {
            row[1] = row[0];
        }
        let kind = if softmax { "keyword-softmax" } else { "keyword-score" };
        let model = keyword_model(kind, &w, &base);
        let u = utterance(n);
        let r = exact_shapley(&model, &u, &cfg()).unwrap();
        for c in &r.classes {
            prop_assert!((c.phi[0] - c.phi[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn linearity((n, wf, bf) in model_parts(), alpha in -3.0..3.0f64, beta in -3.0..3.0f64, seed in any::<u64>()) {
        let k = wf.len();
        let mut g_rng = SplitMix(seed);
        let wg: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| g_rng.uniform(-2.0, 2.0)).collect()).collect();
        let bg: Vec<f64> = (0..k).map(|_| g_rng.uniform(-1.0, 1.0)).collect();
        let f = keyword_model("keyword-score", &wf, &bf);
        let g = keyword_model("keyword-score", &wg, &bg);
        let h = BuiltinModel::linear_combination(alpha, &f, beta, &g).unwrap();
        let u = utterance(n);
        let (rf, rg, rh) = (
            exact_shapley(&f, &u, &cfg()).unwrap(),
            exact_shapley(&g, &u, &cfg()).unwrap(),
            exact_shapley(&h, &u, &cfg()).unwrap(),
        );
        for c in 0..k {
            let expected: Vec<f64> = rf.classes[c].phi.iter().zip(&rg.classes[c].phi).map(|(x, y)| alpha * x + beta * y).collect();
            assert_close(&rh.classes[c].phi, &expected, 1e-9);
        }
    }

    #[test]
    fn scaling_a_score_model_scales_attributions((n, w, base) in model_parts(), scale in 0.1..10.0f64) {
        let scaled: Vec<Vec<f64>> = w.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        let u = utterance(n);
        let tree = build_tree(&u).unwrap();
        let a = partition_attribute(&keyword_model("keyword-score", &w, &base), &u, &tree, &cfg()).unwrap();
        let b = partition_attribute(&keyword_model("keyword-score", &scaled, &base), &u, &tree, &cfg()).unwrap();
        for (ca, cb) in a.classes.iter().zip(&b.classes) {
            let expected: Vec<f64> = ca.phi.iter().map(|x| x * scale).collect();
            assert_close(&cb.phi, &expected, 1e-9);
        }
    }
}

#[test]
fn keyword_additivity_exhaustive_up_to_ten() {
    let mut rng = SplitMix(11);
    for n in 1..=10 {
        let w: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
        let model = keyword_model("keyword-score", &w, &[0.5, -0.5, 0.0]);
        let u = utterance(n);
        let tree = build_tree(&u).unwrap();
        let results = [
            exact_shapley(&model, &u, &cfg()).unwrap(),
            owen_exact(&model, &u, &tree, &cfg()).unwrap(),
            partition_attribute(&model, &u, &tree, &cfg()).unwrap(),
            permutation_shapley(&model, &u, 2, 7, &cfg()).unwrap(),
        ];
        for r in &results {
            for (c, class) in r.classes.iter().enumerate() {
                assert_close(&class.phi, &w[c], 1e-12);
            }
        }
    }
}

#[test]
fn permutation_is_deterministic_per_seed() {
    let mut rng = SplitMix(3);
    let w: Vec<Vec<f64>> = (0..3).map(|_| (0..9).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
    let model = keyword_model("keyword-softmax", &w, &[0.0; 3]);
    let u = utterance(9);
    let first = permutation_shapley(&model, &u, 50, 1234, &cfg()).unwrap();
    for _ in 0..100 {
        let again = permutation_shapley(&model, &u, 50, 1234, &cfg()).unwrap();
        for (a, b) in first.classes.iter().zip(&again.classes) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.phi), bits(&b.phi));
        }
    }
    let other = permutation_shapley(&model, &u, 50, 1235, &cfg()).unwrap();
    assert_ne!(first.classes[0].phi, other.classes[0].phi);
}
