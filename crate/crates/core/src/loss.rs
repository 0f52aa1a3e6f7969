//! Task losses and the clipped structured margin loss
//!
//! ```text
//! L_ρ(x, y, h) = Φ*( max_{y'≠y} { L(y', y) − (1/ρ)[h(x, y) − h(x, y')] } ),
//! Φ*(r) = min(M, max(0, r)),  M = max L.
//! ```
//!
//! The inner max may run over all `y'`: the `y' = y` term is exactly 0 and
//! Φ* floors at 0, so the clipped value is unchanged. The DP path relies on
//! this, the brute-force path excludes `y` explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::graph::{LabelAssignment, DEFAULT_ENUMERATION_CAP};
use crate::inference::{loss_augmented_decode, InferenceMethod, MethodChoice};
use crate::scoring::{FeatureMap, StructuredExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskLoss {
    /// `Σ_k 1[y_k ≠ y'_k]`.
    HammingUnnormalized,
    /// Hamming distance divided by `l`.
    HammingNormalized,
    ZeroOne,
}

impl TaskLoss {
    pub fn name(self) -> &'static str {
        match self {
            TaskLoss::HammingUnnormalized => "hamming_unnormalized",
            TaskLoss::HammingNormalized => "hamming_normalized",
            TaskLoss::ZeroOne => "zero_one",
        }
    }

    pub fn eval(self, a: &LabelAssignment, b: &LabelAssignment) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::InvalidAssignment(format!(
                "cannot compare assignments of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_slices(a.labels(), b.labels()))
    }

    pub(crate) fn eval_slices(self, a: &[usize], b: &[usize]) -> f64 {
        let mismatches = a.iter().zip(b).filter(|(p, q)| p != q).count();
        match self {
            TaskLoss::HammingUnnormalized => mismatches as f64,
            TaskLoss::HammingNormalized => mismatches as f64 / a.len() as f64,
            TaskLoss::ZeroOne => f64::from(u8::from(mismatches > 0)),
        }
    }

    /// Per-node loss contribution when the loss decomposes over nodes.
    pub fn node_unit(self, l: usize) -> Option<f64> {
        match self {
            TaskLoss::HammingUnnormalized => Some(1.0),
            TaskLoss::HammingNormalized => Some(1.0 / l as f64),
            TaskLoss::ZeroOne => None,
        }
    }

    /// `M = max_{y, y'} L(y, y')` over a label space with the given alphabets.
    pub fn max_value(self, alphabet_sizes: &[usize]) -> f64 {
        let flippable = alphabet_sizes.iter().filter(|&&c| c >= 2).count();
        match self {
            TaskLoss::HammingUnnormalized => flippable as f64,
            TaskLoss::HammingNormalized => flippable as f64 / alphabet_sizes.len() as f64,
            TaskLoss::ZeroOne => f64::from(u8::from(flippable > 0)),
        }
    }
}

/// `(ρ, L)`; `M` is derived from the graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub rho: f64,
    pub loss: TaskLoss,
}

impl MarginSpec {
    pub fn new(rho: f64, loss: TaskLoss) -> Result<Self> {
        if rho.is_nan() || rho <= 0.0 {
            return Err(invalid_param("rho", format!("margin must be positive, got {rho}")));
        }
        Ok(MarginSpec { rho, loss })
    }

    pub fn inv_rho(&self) -> f64 {
        1.0 / self.rho
    }
}

/// `Φ*(r) = min(M, max(0, r))`.
pub fn phi_star(r: f64, m: f64) -> f64 {
    r.max(0.0).min(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginEvaluation {
    pub raw_margin: f64,
    pub clipped_loss: f64,
    pub witness: LabelAssignment,
    /// False when `raw_margin ≤ 0`; the witness is then diagnostic only.
    pub active: bool,
    pub method: InferenceMethod,
}

/// `L_ρ(x, y, h^w)` with the maximizing competitor.
pub fn margin_loss(
    map: &FeatureMap,
    w: &[f64],
    example: &StructuredExample,
    spec: &MarginSpec,
) -> Result<MarginEvaluation> {
    margin_loss_with(map, w, example, spec, MethodChoice::Auto, DEFAULT_ENUMERATION_CAP)
}

pub fn margin_loss_with(
    map: &FeatureMap,
    w: &[f64],
    example: &StructuredExample,
    spec: &MarginSpec,
    choice: MethodChoice,
    cap: u64,
) -> Result<MarginEvaluation> {
    let aug = loss_augmented_decode(map, w, &example.x, &example.y, spec, choice, cap)?;
    let m = spec.loss.max_value(map.graph().alphabet_sizes());
    Ok(MarginEvaluation {
        clipped_loss: phi_star(aug.raw_margin, m),
        active: aug.raw_margin > 0.0,
        raw_margin: aug.raw_margin,
        witness: aug.witness,
        method: aug.method,
    })
}

/// An element of `∂_w L_ρ(x, y, h^w)`, dense.
///
/// Inside `0 < r ≤ M` this is `−(1/ρ)(Ψ(x, y) − Ψ(x, ŷ))` for the witness `ŷ`;
/// for `r ≤ 0` and `r > M` the loss is locally flat and the zero vector is
/// returned. At `r = M` the loss is `min(M, r)` with both pieces touching, and
/// the active piece is used, so iterates can leave `w = 0` (where every
/// Hamming competitor sits exactly at `r = M`).
pub fn margin_subgradient(
    map: &FeatureMap,
    w: &[f64],
    example: &StructuredExample,
    spec: &MarginSpec,
) -> Result<Vec<f64>> {
    let eval = margin_loss(map, w, example, spec)?;
    let mut g = vec![0.0; map.dim()];
    accumulate_subgradient(map, example, spec, &eval, 1.0, &mut g);
    Ok(g)
}

/// `dense += scale · g` where `g` is the subgradient selected for `eval`.
pub fn accumulate_subgradient(
    map: &FeatureMap,
    example: &StructuredExample,
    spec: &MarginSpec,
    eval: &MarginEvaluation,
    scale: f64,
    dense: &mut [f64],
) -> bool {
    let m = spec.loss.max_value(map.graph().alphabet_sizes());
    if !subgradient_active(eval.raw_margin, m) || spec.inv_rho() == 0.0 {
        return false;
    }
    let s = scale * spec.inv_rho();
    map.accumulate_features(&example.x, example.y.labels(), -s, dense);
    map.accumulate_features(&example.x, eval.witness.labels(), s, dense);
    true
}

pub(crate) fn subgradient_active(raw: f64, m: f64) -> bool {
    raw > 0.0 && raw <= m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FactorGraph;
    use crate::rng;
    use crate::scoring::{l2_norm, Featurizer, StructuredInput};

    fn chain_example(l: usize, c: usize, seed: u64) -> (FeatureMap, StructuredExample) {
        use rand::Rng;
        let map =
            FeatureMap::new(FactorGraph::chain(l, 2, c).unwrap(), Featurizer::ChainCrf { n: 3 })
                .unwrap();
        let mut r = rng::stream(seed, 0);
        let x = StructuredInput::Contexts((0..l).map(|_| rng::gaussian_vec(&mut r, 3, 1.0)).collect());
        let y = LabelAssignment((0..l).map(|_| r.random_range(0..c)).collect());
        (map, StructuredExample { x, y })
    }

    #[test]
    fn task_loss_values() {
        let a = LabelAssignment::new(vec![0, 1, 2]);
        let b = LabelAssignment::new(vec![0, 2, 2]);
        assert_eq!(TaskLoss::HammingUnnormalized.eval(&a, &a).unwrap(), 0.0);
        assert_eq!(TaskLoss::HammingNormalized.eval(&a, &a).unwrap(), 0.0);
        assert_eq!(TaskLoss::HammingUnnormalized.eval(&a, &b).unwrap(), 1.0);
        assert_eq!(TaskLoss::HammingNormalized.eval(&a, &b).unwrap(), 1.0 / 3.0);
        assert_eq!(TaskLoss::ZeroOne.eval(&a, &b).unwrap(), 1.0);
        assert!(TaskLoss::ZeroOne
            .eval(&a, &LabelAssignment::zeros(2))
            .is_err());
        assert_eq!(TaskLoss::HammingUnnormalized.max_value(&[3, 3, 3]), 3.0);
        assert_eq!(TaskLoss::HammingNormalized.max_value(&[3, 3, 3]), 1.0);
        assert_eq!(TaskLoss::ZeroOne.max_value(&[3, 3, 3]), 1.0);
    }

    #[test]
    fn phi_star_clamps() {
        assert_eq!(phi_star(-1.0, 3.0), 0.0);
        assert_eq!(phi_star(4.0, 3.0), 3.0);
        assert_eq!(phi_star(1.5, 3.0), 1.5);
    }

    #[test]
    fn rejects_nonpositive_rho() {
        assert!(MarginSpec::new(0.0, TaskLoss::ZeroOne).is_err());
        assert!(MarginSpec::new(-1.0, TaskLoss::ZeroOne).is_err());
        assert!(MarginSpec::new(f64::NAN, TaskLoss::ZeroOne).is_err());
    }

    #[test]
    fn zero_weights_give_max_loss() {
        for loss in [TaskLoss::HammingUnnormalized, TaskLoss::HammingNormalized] {
            let (map, ex) = chain_example(4, 3, 1);
            let spec = MarginSpec::new(1.0, loss).unwrap();
            let eval = margin_loss(&map, &vec![0.0; map.dim()], &ex, &spec).unwrap();
            let m = loss.max_value(&[3; 4]);
            assert_eq!(eval.raw_margin, m);
            assert_eq!(eval.clipped_loss, m);
        }
    }

    #[test]
    fn separable_weights_give_zero_loss() {
        // Tables instance where the truth outscores every competitor by ≥ ρ·M.
        let g = FactorGraph::single_node(3).unwrap();
        let map = FeatureMap::new(g, Featurizer::Tables { dim: 1 }).unwrap();
        let ex = StructuredExample {
            x: StructuredInput::Tables(vec![vec![vec![5.0], vec![0.0], vec![1.0]]]),
            y: LabelAssignment::new(vec![0]),
        };
        let spec = MarginSpec::new(2.0, TaskLoss::ZeroOne).unwrap();
        let eval = margin_loss(&map, &[1.0], &ex, &spec).unwrap();
        assert_eq!(eval.clipped_loss, 0.0);
        assert!(!eval.active);
        assert_eq!(margin_subgradient(&map, &[1.0], &ex, &spec).unwrap(), vec![0.0]);
    }

    #[test]
    fn matches_exhaustive_competitors() {
        for seed in 0..20 {
            let (map, ex) = chain_example(3, 2, seed);
            let mut r = rng::stream(seed, 1);
            let w = rng::gaussian_vec(&mut r, map.dim(), 1.0);
            let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
            let h_true = map.score(&w, &ex.x, &ex.y).unwrap();
            let oracle = map
                .graph()
                .enumerate(100)
                .unwrap()
                .map(LabelAssignment)
                .filter(|y2| *y2 != ex.y)
                .map(|y2| {
                    let h = map.score(&w, &ex.x, &y2).unwrap();
                    TaskLoss::HammingUnnormalized.eval(&y2, &ex.y).unwrap() - (h_true - h)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let eval = margin_loss(&map, &w, &ex, &spec).unwrap();
            assert!((eval.clipped_loss - phi_star(oracle, 3.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn upper_region_is_flat() {
        // Competitor far above the truth: r > M, zero subgradient.
        let g = FactorGraph::single_node(2).unwrap();
        let map = FeatureMap::new(g, Featurizer::Tables { dim: 1 }).unwrap();
        let ex = StructuredExample {
            x: StructuredInput::Tables(vec![vec![vec![0.0], vec![10.0]]]),
            y: LabelAssignment::new(vec![0]),
        };
        let spec = MarginSpec::new(1.0, TaskLoss::ZeroOne).unwrap();
        let eval = margin_loss(&map, &[1.0], &ex, &spec).unwrap();
        assert_eq!(eval.raw_margin, 11.0);
        assert_eq!(eval.clipped_loss, 1.0);
        assert_eq!(margin_subgradient(&map, &[1.0], &ex, &spec).unwrap(), vec![0.0]);
    }

    #[test]
    fn subgradient_at_zero_uses_active_piece() {
        let (map, ex) = chain_example(3, 2, 7);
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        let w0 = vec![0.0; map.dim()];
        let g = margin_subgradient(&map, &w0, &ex, &spec).unwrap();
        let eval = margin_loss(&map, &w0, &ex, &spec).unwrap();
        let psi_y = map.features_total(&ex.x, &ex.y).unwrap();
        let psi_hat = map.features_total(&ex.x, &eval.witness).unwrap();
        assert_ne!(eval.witness, ex.y);
        for ((gi, a), b) in g.iter().zip(&psi_y).zip(&psi_hat) {
            assert!((gi - (b - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn subgradient_norm_bounded_by_two_kappa_over_rho() {
        for seed in 0..20 {
            let (map, ex) = chain_example(4, 3, 100 + seed);
            let mut r = rng::stream(seed, 2);
            let w = rng::gaussian_vec(&mut r, map.dim(), 0.3);
            let spec = MarginSpec::new(0.5, TaskLoss::HammingUnnormalized).unwrap();
            let kappa = crate::scoring::compute_kappa(std::slice::from_ref(&ex), &map, 1000)
                .unwrap()
                .value;
            let g = margin_subgradient(&map, &w, &ex, &spec).unwrap();
            assert!(l2_norm(&g) <= 2.0 * kappa / spec.rho + 1e-12);
        }
    }
}
