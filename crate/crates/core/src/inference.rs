//! Exact MAP and loss-augmented decoding.
//!
//! Brute force works on any graph whose label space fits under the
//! enumeration cap. Sliding-window chains are decoded by max-sum dynamic
//! programming over window states. Both paths break ties towards the
//! lexicographically smallest assignment: brute force keeps the first strict
//! maximum in enumeration order, and the DP reconstructs forward from suffix
//! values, picking the smallest label that attains the optimum at each step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_cap, FactorGraph, LabelAssignment, Odometer};
use crate::loss::{MarginSpec, TaskLoss};
use crate::scoring::{FeatureMap, Potentials, StructuredInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMethod {
    BruteForce,
    ChainDp,
}

/// Which path to use for a decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Chain DP when eligible, brute force otherwise.
    #[default]
    Auto,
    Force(InferenceMethod),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub assignment: LabelAssignment,
    pub value: f64,
    pub method: InferenceMethod,
}

/// Result of the inner maximization of the margin loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossAugmented {
    /// `max_{y'} L(y', y) − (1/ρ)[h(x, y) − h(x, y')]`; over `y' ≠ y` for
    /// brute force, over all `y'` for the DP.
    pub raw_margin: f64,
    pub witness: LabelAssignment,
    pub method: InferenceMethod,
}

/// `argmax_y h(x, y)` by enumeration.
pub fn decode_brute(
    map: &FeatureMap,
    w: &[f64],
    x: &StructuredInput,
    cap: u64,
) -> Result<DecodeResult> {
    let g = map.graph();
    check_cap(g.label_space_size(), cap)?;
    let pots = map.potentials(w, x)?;
    let mut odo = Odometer::new(g.alphabet_sizes().to_vec());
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![0; g.num_vars()];
    while let Some(y) = odo.current() {
        let v = pots.score(g, y);
        if v > best {
            best = v;
            arg.copy_from_slice(y);
        }
        odo.advance();
    }
    Ok(DecodeResult {
        assignment: LabelAssignment(arg),
        value: best,
        method: InferenceMethod::BruteForce,
    })
}

/// `argmax_y h(x, y)` by max-sum dynamic programming on a chain.
pub fn decode_chain(map: &FeatureMap, w: &[f64], x: &StructuredInput) -> Result<DecodeResult> {
    let g = map.graph();
    let window = g.chain_window().ok_or(Error::NotAChain)?;
    let pots = map.potentials(w, x)?;
    let (labels, value) = chain_argmax(g, window, &pots.tables);
    Ok(DecodeResult {
        assignment: LabelAssignment(labels),
        value,
        method: InferenceMethod::ChainDp,
    })
}

/// MAP decode using the cheapest exact method available.
pub fn decode(
    map: &FeatureMap,
    w: &[f64],
    x: &StructuredInput,
    choice: MethodChoice,
    cap: u64,
) -> Result<DecodeResult> {
    match resolve(map.graph(), None, choice)? {
        InferenceMethod::ChainDp => decode_chain(map, w, x),
        InferenceMethod::BruteForce => decode_brute(map, w, x, cap),
    }
}

fn resolve(
    graph: &FactorGraph,
    loss: Option<TaskLoss>,
    choice: MethodChoice,
) -> Result<InferenceMethod> {
    let decomposable = loss.is_none_or(|l| l.node_unit(graph.num_vars()).is_some());
    match choice {
        MethodChoice::Auto => Ok(if graph.chain_window().is_some() && decomposable {
            InferenceMethod::ChainDp
        } else {
            InferenceMethod::BruteForce
        }),
        MethodChoice::Force(InferenceMethod::ChainDp) => {
            if graph.chain_window().is_none() {
                Err(Error::NotAChain)
            } else if !decomposable {
                Err(Error::NonDecomposableLoss(loss.expect("checked").name()))
            } else {
                Ok(InferenceMethod::ChainDp)
            }
        }
        MethodChoice::Force(m) => Ok(m),
    }
}

/// Inner maximization of the margin loss for example `(x, y)`.
pub fn loss_augmented_decode(
    map: &FeatureMap,
    w: &[f64],
    x: &StructuredInput,
    y: &LabelAssignment,
    spec: &MarginSpec,
    choice: MethodChoice,
    cap: u64,
) -> Result<LossAugmented> {
    let g = map.graph();
    g.check_assignment(y)?;
    let method = resolve(g, Some(spec.loss), choice)?;
    if method == InferenceMethod::BruteForce {
        check_cap(g.label_space_size(), cap)?;
    }
    let pots = map.potentials(w, x)?;
    Ok(match method {
        InferenceMethod::BruteForce => augmented_brute(g, &pots, y, spec),
        InferenceMethod::ChainDp => augmented_chain(g, &pots, y, spec),
    })
}

pub(crate) fn augmented_brute(
    g: &FactorGraph,
    pots: &Potentials,
    y: &LabelAssignment,
    spec: &MarginSpec,
) -> LossAugmented {
    let truth = pots.score(g, y.labels());
    let inv_rho = spec.inv_rho();
    let mut odo = Odometer::new(g.alphabet_sizes().to_vec());
    let mut best = f64::NEG_INFINITY;
    let mut arg = y.labels().to_vec();
    while let Some(cand) = odo.current() {
        if cand != y.labels() {
            let r = spec.loss.eval_slices(cand, y.labels()) - scaled(inv_rho, truth - pots.score(g, cand));
            if r > best {
                best = r;
                arg.copy_from_slice(cand);
            }
        }
        odo.advance();
    }
    LossAugmented {
        raw_margin: best,
        witness: LabelAssignment(arg),
        method: InferenceMethod::BruteForce,
    }
}

pub(crate) fn augmented_chain(
    g: &FactorGraph,
    pots: &Potentials,
    y: &LabelAssignment,
    spec: &MarginSpec,
) -> LossAugmented {
    let window = g.chain_window().expect("resolved to chain DP");
    let unit = spec
        .loss
        .node_unit(g.num_vars())
        .expect("resolved to decomposable loss");
    // Maximize mismatches + h(y')/(ρ·unit) so loss terms stay integral.
    let score_scale = spec.inv_rho() / unit;
    let owner = g.node_owner();
    let tables: Vec<Vec<f64>> = pots
        .tables
        .iter()
        .enumerate()
        .map(|(f, table)| {
            let owned: Vec<(usize, usize)> = g.factors()[f]
                .iter()
                .enumerate()
                .filter(|(_, &k)| owner[k] == Some(f))
                .map(|(pos, &k)| (pos, k))
                .collect();
            let radices = g.factors()[f]
                .iter()
                .map(|&k| g.alphabet_sizes()[k])
                .collect();
            let mut odo = Odometer::new(radices);
            let mut out = Vec::with_capacity(table.len());
            for &theta in table {
                let y_f = odo.current().expect("table matches factor size");
                let mismatches = owned
                    .iter()
                    .filter(|&&(pos, k)| y_f[pos] != y.labels()[k])
                    .count();
                out.push(scaled(score_scale, theta) + mismatches as f64);
                odo.advance();
            }
            out
        })
        .collect();
    let (labels, value) = chain_argmax(g, window, &tables);
    let truth = pots.score(g, y.labels());
    // The truth scores exactly 0; recomputing it through the DP sums would
    // leave rounding residue at the lower kink.
    let raw_margin = if labels == y.labels() { 0.0 } else { unit * value - scaled(spec.inv_rho(), truth) };
    LossAugmented {
        raw_margin,
        witness: LabelAssignment(labels),
        method: InferenceMethod::ChainDp,
    }
}

// 0·∞ is taken as 0 so an infinite ρ reduces to loss-only decoding.
#[inline]
fn scaled(scale: f64, v: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        scale * v
    }
}

/// Maximizes `Σ_f tables[f][y_f]` over a sliding-window chain.
fn chain_argmax(g: &FactorGraph, window: usize, tables: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let l = g.num_vars();
    let radix = g.alphabet_sizes();
    let n_factors = g.num_factors();
    // state of factor k: labels of nodes k..k+v−2
    let state_size = |k: usize| -> usize { radix[k..k + window - 1].iter().product() };

    // suffix[k][s]: best total of factors k.. given the state entering factor k
    let mut suffix: Vec<Vec<f64>> = vec![Vec::new(); n_factors + 1];
    suffix[n_factors] = vec![0.0; state_size(n_factors)];
    for k in (0..n_factors).rev() {
        let last = radix[k + window - 1];
        let next_mod = state_size(k + 1);
        let table = &tables[k];
        let next = &suffix[k + 1];
        suffix[k] = (0..state_size(k))
            .map(|s| {
                let mut best = f64::NEG_INFINITY;
                for a in 0..last {
                    let idx = s * last + a;
                    let v = table[idx] + next[idx % next_mod];
                    if v > best {
                        best = v;
                    }
                }
                best
            })
            .collect();
    }

    let mut s = 0;
    let mut value = f64::NEG_INFINITY;
    for (i, &v) in suffix[0].iter().enumerate() {
        if v > value {
            value = v;
            s = i;
        }
    }
    let mut labels = vec![0; l];
    let mut rem = s;
    for k in (0..window - 1).rev() {
        labels[k] = rem % radix[k];
        rem /= radix[k];
    }
    for k in 0..n_factors {
        let last = radix[k + window - 1];
        let next_mod = state_size(k + 1);
        let target = suffix[k][s];
        let table = &tables[k];
        let next = &suffix[k + 1];
        let a = (0..last)
            .find(|&a| {
                let idx = s * last + a;
                table[idx] + next[idx % next_mod] == target
            })
            .expect("suffix maximum is attained");
        labels[k + window - 1] = a;
        s = (s * last + a) % next_mod;
    }
    (labels, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DEFAULT_ENUMERATION_CAP as CAP;
    use crate::rng;
    use crate::scoring::Featurizer;

    fn random_chain(l: usize, c: usize, v: usize, seed: u64) -> (FeatureMap, Vec<f64>, StructuredInput) {
        let g = FactorGraph::chain(l, v, c).unwrap();
        let map = FeatureMap::new(g, Featurizer::ChainCrf { n: 3 }).unwrap();
        let mut r = rng::stream(seed, 0);
        let w = rng::gaussian_vec(&mut r, map.dim(), 1.0);
        let x = StructuredInput::Contexts((0..l).map(|_| rng::gaussian_vec(&mut r, 3, 1.0)).collect());
        (map, w, x)
    }

    #[test]
    fn zero_weights_decode_to_all_zeros() {
        let (map, w, x) = random_chain(4, 3, 2, 1);
        let zero = vec![0.0; w.len()];
        for res in [
            decode_brute(&map, &zero, &x, CAP).unwrap(),
            decode_chain(&map, &zero, &x).unwrap(),
        ] {
            assert_eq!(res.assignment, LabelAssignment::zeros(4));
            assert_eq!(res.value, 0.0);
        }
    }

    #[test]
    fn tables_unique_maximum() {
        let g = FactorGraph::new(vec![2, 2], vec![vec![0, 1]]).unwrap();
        let map = FeatureMap::new(g, Featurizer::Tables { dim: 1 }).unwrap();
        let x = StructuredInput::Tables(vec![vec![vec![0.1], vec![0.3], vec![2.0], vec![-1.0]]]);
        let res = decode_brute(&map, &[1.0], &x, CAP).unwrap();
        assert_eq!(res.assignment.labels(), &[1, 0]);
        assert_eq!(res.value, 2.0);

        let g = FactorGraph::single_node(2).unwrap();
        let map = FeatureMap::new(g, Featurizer::Tables { dim: 1 }).unwrap();
        let x = StructuredInput::Tables(vec![vec![vec![0.0], vec![1.0]]]);
        assert!(matches!(decode_chain(&map, &[1.0], &x), Err(Error::NotAChain)));
    }

    #[test]
    fn brute_beats_random_competitors() {
        use rand::Rng;
        let (map, w, x) = random_chain(4, 3, 2, 5);
        let best = decode_brute(&map, &w, &x, CAP).unwrap();
        let mut r = rng::stream(5, 9);
        for _ in 0..50 {
            let y = LabelAssignment((0..4).map(|_| r.random_range(0..3)).collect());
            assert!(best.value >= map.score(&w, &x, &y).unwrap() - 1e-12);
        }
    }

    #[test]
    fn chain_dp_matches_brute_force() {
        let mut seed = 0;
        for l in 2..=6 {
            for c in 2..=4 {
                for v in 2..=l.min(3) {
                    if (c as u64).pow(l as u32) > 4096 {
                        continue;
                    }
                    for _ in 0..4 {
                        seed += 1;
                        let (map, w, x) = random_chain(l, c, v, seed);
                        let a = decode_brute(&map, &w, &x, CAP).unwrap();
                        let b = decode_chain(&map, &w, &x).unwrap();
                        assert_eq!(a.assignment, b.assignment, "l={l} c={c} v={v}");
                        assert!((a.value - b.value).abs() < 1e-9);
                        let re = map.score(&w, &x, &b.assignment).unwrap();
                        assert!((re - b.value).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn single_window_is_per_factor_argmax() {
        let (map, w, x) = random_chain(3, 3, 3, 11);
        let pots = map.potentials(&w, &x).unwrap();
        let (idx, _) = pots.tables[0]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let res = decode_chain(&map, &w, &x).unwrap();
        assert_eq!(res.assignment.0, map.graph().partial_from_index(0, idx));
    }

    #[test]
    fn constant_shift_keeps_argmax() {
        let (map, w, x) = random_chain(5, 3, 2, 21);
        let mut pots = map.potentials(&w, &x).unwrap();
        let g = map.graph();
        let (before, v0) = chain_argmax(g, 2, &pots.tables);
        pots.tables[2].iter_mut().for_each(|t| *t += 1.75);
        let (after, v1) = chain_argmax(g, 2, &pots.tables);
        assert_eq!(before, after);
        assert!((v1 - v0 - 1.75).abs() < 1e-12);
    }

    #[test]
    fn loss_only_decode_flips_every_node() {
        let (map, w, x) = random_chain(4, 3, 2, 2);
        let y = LabelAssignment::new(vec![0, 1, 2, 0]);
        let spec = MarginSpec::new(f64::INFINITY, TaskLoss::HammingUnnormalized).unwrap();
        for choice in [
            MethodChoice::Force(InferenceMethod::BruteForce),
            MethodChoice::Force(InferenceMethod::ChainDp),
        ] {
            let res = loss_augmented_decode(&map, &w, &x, &y, &spec, choice, CAP).unwrap();
            assert_eq!(res.raw_margin, 4.0);
            assert!(res.witness.labels().iter().zip(y.labels()).all(|(a, b)| a != b));
        }
    }

    #[test]
    fn zero_one_with_zero_weights() {
        let (map, w, x) = random_chain(3, 2, 2, 3);
        let zero = vec![0.0; w.len()];
        let spec = MarginSpec::new(1.0, TaskLoss::ZeroOne).unwrap();
        let y = LabelAssignment::zeros(3);
        let res = loss_augmented_decode(&map, &zero, &x, &y, &spec, MethodChoice::Auto, CAP).unwrap();
        assert_eq!(res.method, InferenceMethod::BruteForce);
        assert_eq!(res.raw_margin, 1.0);
        assert_eq!(res.witness.labels(), &[0, 0, 1]);
        assert!(matches!(
            loss_augmented_decode(
                &map,
                &zero,
                &x,
                &y,
                &spec,
                MethodChoice::Force(InferenceMethod::ChainDp),
                CAP
            ),
            Err(Error::NonDecomposableLoss(_))
        ));
    }

    #[test]
    fn cap_is_enforced() {
        let (map, w, x) = random_chain(6, 4, 2, 4);
        assert!(matches!(
            decode_brute(&map, &w, &x, 100),
            Err(Error::EnumerationCap { .. })
        ));
        assert!(decode(&map, &w, &x, MethodChoice::Auto, 100).is_ok());
    }
}
