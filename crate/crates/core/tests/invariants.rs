use proptest::prelude::*;
use sop_core::inference::{InferenceMethod, MethodChoice};
use sop_core::loss::{margin_loss, margin_loss_with};
use sop_core::scoring::dot;
use sop_core::{FactorGraph, FeatureMap, Featurizer, LabelAssignment, MarginSpec, StructuredExample, StructuredInput, TaskLoss};

const N: usize = 3;

/// A chain instance: (l, c, contexts, truth, two weight vectors).
fn chain_instance() -> impl Strategy<Value = (FeatureMap, StructuredExample, Vec<f64>, Vec<f64>)> {
    (2usize..=5, 2usize..=3).prop_flat_map(|(l, c)| {
        let map = FeatureMap::new(FactorGraph::chain(l, 2, c).unwrap(), Featurizer::ChainCrf { n: N }).unwrap();
        let d = map.dim();
        (
            Just(map),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, N), l),
            prop::collection::vec(0..c, l),
            prop::collection::vec(-2.0f64..2.0, d),
            prop::collection::vec(-2.0f64..2.0, d),
        )
            .prop_map(|(map, ctx, y, w1, w2)| {
                let ex = StructuredExample { x: StructuredInput::Contexts(ctx), y: LabelAssignment::new(y) };
                (map, ex, w1, w2)
            })
    })
}

fn loss_kind() -> impl Strategy<Value = TaskLoss> {
    prop_oneof![Just(TaskLoss::HammingUnnormalized), Just(TaskLoss::HammingNormalized), Just(TaskLoss::ZeroOne)]
}

fn mid(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn score_is_linear_in_w((map, ex, w1, w2) in chain_instance(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let lhs = map.score(&combo, &ex.x, &ex.y).unwrap();
        let rhs = a * map.score(&w1, &ex.x, &ex.y).unwrap() + b * map.score(&w2, &ex.x, &ex.y).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        let psi = map.features_total(&ex.x, &ex.y).unwrap();
        prop_assert!((dot(&w1, &psi) - map.score(&w1, &ex.x, &ex.y).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn restrict_reads_only_factor_nodes(l in 2usize..7, v in 2usize..4, y in prop::collection::vec(0usize..3, 7), k in 0usize..7) {
        prop_assume!(v <= l);
        let g = FactorGraph::chain(l, v, 3).unwrap();
        let y = LabelAssignment::new(y[..l].to_vec());
        let k = k % l;
        let mut z = y.labels().to_vec();
        z[k] = (z[k] + 1) % 3;
        let z = LabelAssignment::new(z);
        for f in 0..g.num_factors() {
            let inside = g.factor_nodes(f).unwrap().contains(&k);
            let same = g.restrict(&y, f).unwrap() == g.restrict(&z, f).unwrap();
            prop_assert_eq!(same, !inside);
        }
    }

    #[test]
    fn enumeration_has_product_cardinality(sizes in prop::collection::vec(1usize..5, 1..5)) {
        let l = sizes.len();
        let g = FactorGraph::new(sizes.clone(), vec![(0..l).collect()]).unwrap();
        let all: Vec<Vec<usize>> = g.enumerate(u64::MAX).unwrap().collect();
        let expected: usize = sizes.iter().product();
        prop_assert_eq!(all.len(), expected);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted, all);
    }

    #[test]
    fn chain_dp_matches_enumeration((map, ex, w, _) in chain_instance(), rho in 0.25f64..4.0, normalized in any::<bool>()) {
        let loss = if normalized { TaskLoss::HammingNormalized } else { TaskLoss::HammingUnnormalized };
        let spec = MarginSpec::new(rho, loss).unwrap();
        let dp = margin_loss_with(&map, &w, &ex, &spec, MethodChoice::Force(InferenceMethod::ChainDp), u64::MAX).unwrap();
        let bf = margin_loss_with(&map, &w, &ex, &spec, MethodChoice::Force(InferenceMethod::BruteForce), u64::MAX).unwrap();
        prop_assert!((dp.clipped_loss - bf.clipped_loss).abs() <= 1e-9);
    }

    #[test]
    fn margin_loss_is_lipschitz((map, ex, w1, w2) in chain_instance(), rho in 0.25f64..4.0, loss in loss_kind()) {
        let spec = MarginSpec::new(rho, loss).unwrap();
        let a = margin_loss(&map, &w1, &ex, &spec).unwrap().clipped_loss;
        let b = margin_loss(&map, &w2, &ex, &spec).unwrap().clipped_loss;
        let mut worst: f64 = 0.0;
        for y in map.graph().enumerate(u64::MAX).unwrap() {
            let y = LabelAssignment::new(y);
            let diff = map.score(&w1, &ex.x, &y).unwrap() - map.score(&w2, &ex.x, &y).unwrap();
            worst = worst.max(diff.abs());
        }
        prop_assert!((a - b).abs() <= 2.0 * worst / rho + 1e-9);
    }

    #[test]
    fn floored_hinge_is_midpoint_convex((map, ex, w1, w2) in chain_instance(), rho in 0.25f64..4.0, loss in loss_kind()) {
        let spec = MarginSpec::new(rho, loss).unwrap();
        let f = |w: &[f64]| margin_loss(&map, w, &ex, &spec).unwrap().raw_margin.max(0.0);
        prop_assert!(f(&mid(&w1, &w2)) <= 0.5 * (f(&w1) + f(&w2)) + 1e-9);
    }
}

/// The upper clip at `M` breaks convexity; a direct counterexample.
#[test]
fn clipped_loss_is_not_convex() {
    // Single binary node, one feature: Ψ(x, 0) = 0, Ψ(x, 1) = 1, truth 0.
    let g = FactorGraph::new(vec![2], vec![vec![0]]).unwrap();
    let map = FeatureMap::new(g, Featurizer::Tables { dim: 1 }).unwrap();
    let ex = StructuredExample {
        x: StructuredInput::Tables(vec![vec![vec![0.0], vec![1.0]]]),
        y: LabelAssignment::new(vec![0]),
    };
    let spec = MarginSpec::new(1.0, TaskLoss::ZeroOne).unwrap();
    // raw margin is 1 + w, clipped to [0, 1]: flat at 1 for w ≥ 0, a ramp below.
    let f = |w: f64| margin_loss(&map, &[w], &ex, &spec).unwrap().clipped_loss;
    let (a, b) = (-1.0, 1.0);
    let lhs = f(0.5 * (a + b));
    let rhs = 0.5 * (f(a) + f(b));
    println!("clipped loss: f(mid) = {lhs}, mean of ends = {rhs}");
    assert!(lhs > rhs, "expected a convexity violation");
    // The floored hinge at the same points is convex.
    let h = |w: f64| margin_loss(&map, &[w], &ex, &spec).unwrap().raw_margin.max(0.0);
    assert!(h(0.0) <= 0.5 * (h(a) + h(b)));
}
