//! Joint feature maps `Ψ(x, y) = Σ_f Ψ_f(x, y_f)`, linear scores
//! `h^w(x, y) = ⟨w, Ψ(x, y)⟩`, and the norm constants κ and Ψ*.
//!
//! Two feature schemes are supported:
//!
//! * `chain_crf`: sliding-window chains over a shared alphabet of `c`
//!   labels with `n`-dimensional node contexts. The layout is `c` emission
//!   blocks of width `n` (block `a` collects the contexts of nodes labelled
//!   `a`) followed by `c^v` transition indicators indexed row-major by the
//!   window's labels, so `D = n·c + c^v` (`n·c + c²` for pairwise chains).
//!   The window starting at node `k` emits `x^k`; the final window also emits
//!   every later node, so each context is counted exactly once.
//! * `tables`: explicit per-factor tables mapping every `y_f` to a vector in
//!   `R^D`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::graph::{check_cap, FactorGraph, LabelAssignment, Odometer};

/// Input `x`: either per-node contexts or explicit factor feature tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuredInput {
    /// One context vector per node, all of the same dimension.
    Contexts(Vec<Vec<f64>>),
    /// `tables[f][index of y_f]` is `Ψ_f(x, y_f)`.
    Tables(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredExample {
    pub x: StructuredInput,
    pub y: LabelAssignment,
}

/// Feature scheme as declared in a dataset header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "featurizer", rename_all = "snake_case")]
pub enum Featurizer {
    ChainCrf { n: usize },
    Tables {
        #[serde(rename = "D")]
        dim: usize,
    },
}

/// Dense weight vector `w ∈ R^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(dim: usize) -> Self {
        WeightVector(vec![0.0; dim])
    }

    pub fn norm(&self, p: f64) -> f64 {
        lp_norm(&self.0, p)
    }

    /// Membership in `H_p`: `‖w‖_p ≤ Λ`.
    pub fn in_ball(&self, p: f64, lambda: f64) -> bool {
        self.norm(p) <= lambda
    }
}

impl std::ops::Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        WeightVector(v)
    }
}

/// Sparse `Ψ_f(x, y_f)`; indices may repeat and are summed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFeatures {
    pub entries: Vec<(usize, f64)>,
}

impl SparseFeatures {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| w[i] * v).sum()
    }

    pub fn add_to(&self, dense: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            dense[i] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.add_to(&mut out, 1.0);
        out
    }
}

/// Graph plus feature scheme, with the derived layout precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    graph: FactorGraph,
    featurizer: Featurizer,
    dim: usize,
    // owned[f]: (position in N(f), node) pairs whose emissions factor f writes
    owned: Vec<Vec<(usize, usize)>>,
}

impl FeatureMap {
    pub fn new(graph: FactorGraph, featurizer: Featurizer) -> Result<Self> {
        let dim = match featurizer {
            Featurizer::ChainCrf { n } => {
                let v = graph.chain_window().ok_or_else(|| {
                    Error::InvalidInput("chain_crf features require a sliding-window chain".into())
                })?;
                let c = graph.alphabet_sizes()[0];
                if graph.alphabet_sizes().iter().any(|&ck| ck != c) {
                    return Err(Error::InvalidInput(
                        "chain_crf features require a shared alphabet".into(),
                    ));
                }
                if n == 0 {
                    return Err(invalid_param("n", "context dimension must be positive"));
                }
                n * c + c.pow(v as u32)
            }
            Featurizer::Tables { dim } => {
                if dim == 0 {
                    return Err(invalid_param("D", "feature dimension must be positive"));
                }
                dim
            }
        };
        let owner = graph.node_owner();
        let owned = graph
            .factors()
            .iter()
            .enumerate()
            .map(|(f, nodes)| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| owner[k] == Some(f))
                    .map(|(pos, &k)| (pos, k))
                    .collect()
            })
            .collect();
        Ok(FeatureMap {
            graph,
            featurizer,
            dim,
            owned,
        })
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn featurizer(&self) -> Featurizer {
        self.featurizer
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_input(&self, x: &StructuredInput) -> Result<()> {
        match (self.featurizer, x) {
            (Featurizer::ChainCrf { n }, StructuredInput::Contexts(ctx)) => {
                if ctx.len() != self.graph.num_vars() {
                    return Err(Error::DimensionMismatch {
                        expected: self.graph.num_vars(),
                        actual: ctx.len(),
                    });
                }
                if let Some(bad) = ctx.iter().find(|c| c.len() != n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: bad.len(),
                    });
                }
                Ok(())
            }
            (Featurizer::Tables { dim }, StructuredInput::Tables(tables)) => {
                if tables.len() != self.graph.num_factors() {
                    return Err(Error::DimensionMismatch {
                        expected: self.graph.num_factors(),
                        actual: tables.len(),
                    });
                }
                for (f, table) in tables.iter().enumerate() {
                    if table.len() != self.graph.factor_size(f) {
                        return Err(Error::InvalidInput(format!(
                            "table for factor {f} has {} rows, expected |Y_f| = {}",
                            table.len(),
                            self.graph.factor_size(f)
                        )));
                    }
                    if let Some(bad) = table.iter().find(|v| v.len() != dim) {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: bad.len(),
                        });
                    }
                }
                Ok(())
            }
            (Featurizer::ChainCrf { .. }, StructuredInput::Tables(_)) => Err(Error::InvalidInput(
                "chain_crf features need context inputs".into(),
            )),
            (Featurizer::Tables { .. }, StructuredInput::Contexts(_)) => Err(Error::InvalidInput(
                "tables features need table inputs".into(),
            )),
        }
    }

    pub fn check_example(&self, ex: &StructuredExample) -> Result<()> {
        self.check_input(&ex.x)?;
        self.graph.check_assignment(&ex.y)
    }

    /// `Ψ_f(x, y_f)` for a partial assignment in the node order of `N(f)`.
    pub fn features_factor(
        &self,
        x: &StructuredInput,
        f: usize,
        y_f: &[usize],
    ) -> Result<SparseFeatures> {
        let nodes = self.graph.factor_nodes(f)?;
        if y_f.len() != nodes.len() {
            return Err(Error::InvalidAssignment(format!(
                "factor {f} has {} nodes, got {} labels",
                nodes.len(),
                y_f.len()
            )));
        }
        for (&k, &a) in nodes.iter().zip(y_f) {
            if a >= self.graph.alphabet_sizes()[k] {
                return Err(Error::InvalidAssignment(format!(
                    "label {a} out of range at node {k}"
                )));
            }
        }
        self.check_input(x)?;
        Ok(self.factor_features_unchecked(x, f, y_f))
    }

    fn factor_features_unchecked(
        &self,
        x: &StructuredInput,
        f: usize,
        y_f: &[usize],
    ) -> SparseFeatures {
        let index = self.graph.partial_index(f, y_f);
        match (self.featurizer, x) {
            (Featurizer::ChainCrf { n }, StructuredInput::Contexts(ctx)) => {
                let c = self.graph.alphabet_sizes()[0];
                let mut entries = Vec::with_capacity(n * self.owned[f].len() + 1);
                for &(pos, k) in &self.owned[f] {
                    let block = y_f[pos] * n;
                    entries.extend(ctx[k].iter().enumerate().map(|(i, &v)| (block + i, v)));
                }
                entries.push((n * c + index, 1.0));
                SparseFeatures { entries }
            }
            (Featurizer::Tables { .. }, StructuredInput::Tables(tables)) => SparseFeatures {
                entries: tables[f][index].iter().copied().enumerate().collect(),
            },
            _ => unreachable!("input validated against featurizer"),
        }
    }

    /// Dense `Ψ(x, y)`.
    pub fn features_total(&self, x: &StructuredInput, y: &LabelAssignment) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.graph.check_assignment(y)?;
        let mut out = vec![0.0; self.dim];
        self.accumulate_features(x, y.labels(), 1.0, &mut out);
        Ok(out)
    }

    /// `dense += scale · Ψ(x, y)` without validation.
    pub(crate) fn accumulate_features(
        &self,
        x: &StructuredInput,
        labels: &[usize],
        scale: f64,
        dense: &mut [f64],
    ) {
        let mut y_f = Vec::new();
        for (f, nodes) in self.graph.factors().iter().enumerate() {
            y_f.clear();
            y_f.extend(nodes.iter().map(|&k| labels[k]));
            self.factor_features_unchecked(x, f, &y_f)
                .add_to(dense, scale);
        }
    }

    /// `h^w(x, y) = ⟨w, Ψ(x, y)⟩`.
    pub fn score(&self, w: &[f64], x: &StructuredInput, y: &LabelAssignment) -> Result<f64> {
        self.check_weights(w)?;
        let psi = self.features_total(x, y)?;
        Ok(dot(w, &psi))
    }

    pub fn check_weights(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// Per-factor score tables `θ_f[y_f] = ⟨w, Ψ_f(x, y_f)⟩`.
    pub fn potentials(&self, w: &[f64], x: &StructuredInput) -> Result<Potentials> {
        self.check_weights(w)?;
        self.check_input(x)?;
        Ok(self.potentials_unchecked(w, x))
    }

    pub(crate) fn potentials_unchecked(&self, w: &[f64], x: &StructuredInput) -> Potentials {
        let g = &self.graph;
        let tables = match (self.featurizer, x) {
            (Featurizer::ChainCrf { n }, StructuredInput::Contexts(ctx)) => {
                let c = g.alphabet_sizes()[0];
                // emission[k][a] = ⟨w_a, x^k⟩
                let emission: Vec<Vec<f64>> = ctx
                    .iter()
                    .map(|xk| (0..c).map(|a| dot(&w[a * n..(a + 1) * n], xk)).collect())
                    .collect();
                let trans = &w[n * c..];
                (0..g.num_factors())
                    .map(|f| {
                        let radices = g.factors()[f]
                            .iter()
                            .map(|&k| g.alphabet_sizes()[k])
                            .collect();
                        let mut odo = Odometer::new(radices);
                        let mut table = Vec::with_capacity(g.factor_size(f));
                        let mut index = 0;
                        while let Some(y_f) = odo.current() {
                            let e: f64 = self.owned[f]
                                .iter()
                                .map(|&(pos, k)| emission[k][y_f[pos]])
                                .sum();
                            table.push(e + trans[index]);
                            index += 1;
                            odo.advance();
                        }
                        table
                    })
                    .collect()
            }
            (Featurizer::Tables { .. }, StructuredInput::Tables(t)) => t
                .iter()
                .map(|rows| rows.iter().map(|v| dot(w, v)).collect())
                .collect(),
            _ => unreachable!("input validated against featurizer"),
        };
        Potentials { tables }
    }
}

/// Factor score tables for one input under one weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub tables: Vec<Vec<f64>>,
}

impl Potentials {
    /// `h(x, y) = Σ_f θ_f[y_f]`.
    pub fn score(&self, graph: &FactorGraph, labels: &[usize]) -> f64 {
        self.tables
            .iter()
            .enumerate()
            .map(|(f, t)| t[graph.factor_index(f, labels)])
            .sum()
    }
}

/// κ with a flag telling whether it was computed by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    pub exact: bool,
}

/// Measured feature-norm constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub kappa: f64,
    pub kappa_exact: bool,
    pub psi_star: f64,
    pub q: f64,
}

/// `κ = sup ‖Ψ(x, y)‖₂` over the dataset inputs and all labelings.
///
/// Exact when `|Y|` fits under `cap`; otherwise the triangle-inequality
/// bound `Σ_f max_{y_f} ‖Ψ_f(x, y_f)‖₂`, maximized over inputs.
pub fn compute_kappa(examples: &[StructuredExample], map: &FeatureMap, cap: u64) -> Result<Kappa> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in examples {
        map.check_input(&ex.x)?;
    }
    let g = map.graph();
    let exact = check_cap(g.label_space_size(), cap).is_ok();
    let mut best: f64 = 0.0;
    let mut dense = vec![0.0; map.dim()];
    for ex in examples {
        if exact {
            let mut odo = Odometer::new(g.alphabet_sizes().to_vec());
            while let Some(y) = odo.current() {
                dense.iter_mut().for_each(|v| *v = 0.0);
                map.accumulate_features(&ex.x, y, 1.0, &mut dense);
                best = best.max(l2_norm(&dense));
                odo.advance();
            }
        } else {
            let mut total = 0.0;
            for f in 0..g.num_factors() {
                total += max_factor_norm(map, &ex.x, f, 2.0, &mut dense);
            }
            best = best.max(total);
        }
    }
    Ok(Kappa { value: best, exact })
}

/// `Ψ* = sup_{f, y_f, x} ‖Ψ_f(x, y_f)‖_q` over the dataset inputs.
pub fn compute_psi_star(examples: &[StructuredExample], map: &FeatureMap, q: f64) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if q.is_nan() || q <= 1.0 {
        return Err(invalid_param("q", format!("dual index must lie in (1, ∞], got {q}")));
    }
    let mut dense = vec![0.0; map.dim()];
    let mut best: f64 = 0.0;
    for ex in examples {
        map.check_input(&ex.x)?;
        for f in 0..map.graph().num_factors() {
            best = best.max(max_factor_norm(map, &ex.x, f, q, &mut dense));
        }
    }
    Ok(best)
}

fn max_factor_norm(
    map: &FeatureMap,
    x: &StructuredInput,
    f: usize,
    q: f64,
    scratch: &mut [f64],
) -> f64 {
    let g = map.graph();
    let mut best: f64 = 0.0;
    for index in 0..g.factor_size(f) {
        let y_f = g.partial_from_index(f, index);
        scratch.iter_mut().for_each(|v| *v = 0.0);
        map.factor_features_unchecked(x, f, &y_f).add_to(scratch, 1.0);
        best = best.max(lp_norm(scratch, q));
    }
    best
}

/// Measures κ and Ψ* for `p`-norm constrained weights (q = p/(p−1)).
pub fn norm_constants(
    examples: &[StructuredExample],
    map: &FeatureMap,
    p: f64,
    cap: u64,
) -> Result<NormConstants> {
    let q = dual_index(p)?;
    let kappa = compute_kappa(examples, map, cap)?;
    let psi_star = compute_psi_star(examples, map, q)?;
    Ok(NormConstants {
        kappa: kappa.value,
        kappa_exact: kappa.exact,
        psi_star,
        q,
    })
}

/// Hölder conjugate of `p`. `p = 1` (q = ∞) is unsupported because the
/// complexity bound scales with `√(q−1)`.
pub fn dual_index(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 1.0 {
        return Err(invalid_param("p", format!("norm index must exceed 1, got {p}")));
    }
    if p.is_infinite() {
        return Err(invalid_param("p", "p = ∞ gives q = 1, outside (1, ∞]"));
    }
    Ok(p / (p - 1.0))
}

/// Radial projection onto `{‖w‖₂ ≤ Λ}`.
pub fn project_l2(w: &[f64], radius: f64) -> Vec<f64> {
    let norm = l2_norm(w);
    if norm <= radius {
        w.to_vec()
    } else {
        w.iter().map(|v| v * radius / norm).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m: f64, a| m.max(a.abs()))
    } else if p == 2.0 {
        l2_norm(v)
    } else if p == 1.0 {
        v.iter().map(|a| a.abs()).sum()
    } else {
        v.iter().map(|a| a.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}
