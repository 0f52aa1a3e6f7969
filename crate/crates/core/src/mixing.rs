//! Document data from stationary β-mixing Markov sources.
//!
//! A document is a run of `J` sentences whose latent states follow a finite,
//! irreducible and aperiodic Markov chain started from its stationary law.
//! Each state owns a teacher, so sentence labels depend on the state and the
//! dependence between sentences is controlled by the chain. Documents are
//! independent of one another.
//!
//! For such chains the mixing coefficient reduces to
//! `β(a) = Σ_s π(s) · TV(P^a(s, ·), π)`, computed here from exact matrix
//! powers. The Dobrushin coefficient `γ = max_{s,s'} TV(P(s,·), P(s',·))`
//! certifies `β(a) ≤ γ^a`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{mixing_bound, MixingOutcome, ProblemConstants};
use crate::datagen::{Generator, GeneratorConfig};
use crate::dataset::Dataset;
use crate::error::{invalid_param, Error, Result};
use crate::graph::FactorGraph;
use crate::json;
use crate::loss::MarginSpec;
use crate::rng::{self, StreamRng};
use crate::scoring::{FeatureMap, Featurizer, StructuredExample};
use crate::train::empirical_risk;

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// A validated transition matrix with its stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SourceSpec", into = "SourceSpec")]
pub struct MarkovSource {
    transition: DMatrix<f64>,
    stationary: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub transition: Vec<Vec<f64>>,
}

impl TryFrom<SourceSpec> for MarkovSource {
    type Error = Error;
    fn try_from(s: SourceSpec) -> Result<Self> {
        MarkovSource::new(s.transition)
    }
}

impl From<MarkovSource> for SourceSpec {
    fn from(s: MarkovSource) -> Self {
        SourceSpec { transition: s.rows() }
    }
}

fn tv(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    0.5 * a.zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

impl MarkovSource {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidSource("transition matrix is empty".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidSource(format!("row {s} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidSource(format!("row {s} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidSource(format!("row {s} sums to {sum}")));
            }
        }
        let p = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        if !is_primitive(&p) {
            return Err(Error::InvalidSource(
                "chain is not irreducible and aperiodic (no strictly positive power)".into(),
            ));
        }
        let stationary = stationary_distribution(&p)?;
        Ok(MarkovSource { transition: p, stationary })
    }

    /// `[[1−ε, ε], [ε, 1−ε]]`.
    pub fn two_state_lazy(eps: f64) -> Result<Self> {
        MarkovSource::new(vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]])
    }

    /// Every row equal to `pi`: consecutive states are independent.
    pub fn memoryless(pi: Vec<f64>) -> Result<Self> {
        MarkovSource::new(vec![pi.clone(); pi.len()])
    }

    pub fn n_states(&self) -> usize {
        self.stationary.len()
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states())
            .map(|i| self.transition.row(i).iter().copied().collect())
            .collect()
    }

    pub fn power(&self, a: usize) -> DMatrix<f64> {
        let n = self.n_states();
        let mut result = DMatrix::identity(n, n);
        let mut base = self.transition.clone();
        let mut k = a;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            k >>= 1;
        }
        result
    }

    fn sample_from(dist: impl Iterator<Item = f64>, r: &mut StreamRng) -> usize {
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (s, p) in dist.enumerate() {
            acc += p;
            if p > 0.0 {
                last = s;
            }
            if u < acc {
                return s;
            }
        }
        last
    }

    pub fn sample_initial(&self, r: &mut StreamRng) -> usize {
        Self::sample_from(self.stationary.iter().copied(), r)
    }

    pub fn step(&self, s: usize, r: &mut StreamRng) -> usize {
        Self::sample_from(self.transition.row(s).iter().copied(), r)
    }

    /// A stationary state path of length `len`.
    pub fn sample_path(&self, len: usize, r: &mut StreamRng) -> Vec<usize> {
        let mut path = Vec::with_capacity(len);
        if len == 0 {
            return path;
        }
        let mut s = self.sample_initial(r);
        path.push(s);
        for _ in 1..len {
            s = self.step(s, r);
            path.push(s);
        }
        path
    }
}

fn is_primitive(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| p[(i, j)] > 0.0).collect()).collect();
    let mut cur = adj.clone();
    // Wielandt: a primitive matrix has P^k > 0 for k = (n−1)² + 1 ≤ n².
    for _ in 0..(n * n).max(1) {
        if cur.iter().all(|row| row.iter().all(|&b| b)) {
            return true;
        }
        cur = (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|k| cur[i][k] && adj[k][j])).collect())
            .collect();
    }
    false
}

fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    // (Pᵀ − I) π = 0 with the last equation replaced by Σ π = 1.
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidSource("singular stationarity system".into()))?;
    let pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|v| v / total).collect();
    for j in 0..n {
        let back: f64 = (0..n).map(|i| pi[i] * p[(i, j)]).sum();
        if (back - pi[j]).abs() > STATIONARY_TOL {
            return Err(Error::InvalidSource(format!("πP deviates from π by {} at state {j}", back - pi[j])));
        }
    }
    Ok(pi)
}

/// `β(a) = Σ_s π(s) TV(P^a(s, ·), π)`.
pub fn beta_exact(source: &MarkovSource, a: usize) -> Result<f64> {
    if a == 0 {
        return Err(invalid_param("a", "must be at least 1"));
    }
    let pa = source.power(a);
    let pi = source.stationary();
    Ok((0..source.n_states())
        .map(|s| pi[s] * tv(pa.row(s).iter().copied(), pi.iter().copied()))
        .sum())
}

/// `γ = max_{s,s'} TV(P(s, ·), P(s', ·))`.
pub fn dobrushin(source: &MarkovSource) -> f64 {
    let p = source.transition();
    let n = source.n_states();
    let mut gamma: f64 = 0.0;
    for s in 0..n {
        for t in (s + 1)..n {
            gamma = gamma.max(tv(p.row(s).iter().copied(), p.row(t).iter().copied()));
        }
    }
    gamma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub a_values: Vec<usize>,
    pub beta_exact: Vec<f64>,
    pub beta_dobrushin: Vec<f64>,
    pub gamma: f64,
}

impl MixingProfile {
    pub fn compute(source: &MarkovSource, a_values: &[usize]) -> Result<Self> {
        let gamma = dobrushin(source);
        let beta = a_values.iter().map(|&a| beta_exact(source, a)).collect::<Result<Vec<_>>>()?;
        Ok(MixingProfile {
            a_values: a_values.to_vec(),
            beta_exact: beta,
            beta_dobrushin: a_values.iter().map(|&a| gamma.powi(a as i32)).collect(),
            gamma,
        })
    }

    /// Profile over every `a` with `2a | J`.
    pub fn for_document_length(source: &MarkovSource, j: usize) -> Result<Self> {
        Self::compute(source, &block_lengths(j)?)
    }

    pub fn beta(&self, a: usize) -> Option<f64> {
        self.a_values.iter().position(|&x| x == a).map(|i| self.beta_exact[i])
    }
}

/// All `a ≥ 1` with `J` a multiple of `2a`.
pub fn block_lengths(j: usize) -> Result<Vec<usize>> {
    if j < 2 || !j.is_multiple_of(2) {
        return Err(invalid_param("J", format!("need an even J ≥ 2 for any block length, got {j}")));
    }
    Ok((1..=j / 2).filter(|a| (j / 2).is_multiple_of(*a)).collect())
}

/// Per-state teachers sharing one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Emitters {
    pub generators: Vec<Generator>,
}

impl Emitters {
    /// State `s` gets a teacher drawn from stream `s` of a seed derived from
    /// `config.seed`; noise and structure come from `config`.
    pub fn new(config: &GeneratorConfig, n_states: usize) -> Result<Self> {
        let base = Generator::new(config)?;
        let seed = rng::child_seed(config.seed, 2);
        let generators = (0..n_states)
            .map(|s| {
                let teacher = rng::sphere_vec(&mut rng::stream(seed, s as u64), base.map.dim(), config.teacher_norm);
                base.with_teacher(teacher)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Emitters { generators })
    }

    pub fn map(&self) -> &FeatureMap {
        &self.generators[0].map
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentDataset {
    pub map: FeatureMap,
    pub documents: Vec<Vec<StructuredExample>>,
    /// Latent state of every sentence (synthetic mode).
    pub states: Vec<Vec<usize>>,
    pub n_states: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocHeader {
    schema_version: u32,
    graph: FactorGraph,
    featurizer: Featurizer,
    documents: usize,
    #[serde(rename = "J")]
    j: usize,
    n_states: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    doc: usize,
    pos: usize,
    state: usize,
    #[serde(flatten)]
    example: StructuredExample,
}

impl DocumentDataset {
    pub fn m(&self) -> usize {
        self.documents.len()
    }

    pub fn j(&self) -> usize {
        self.documents.first().map_or(0, Vec::len)
    }

    /// All sentences as one flat dataset.
    pub fn pooled(&self) -> Dataset {
        Dataset {
            map: self.map.clone(),
            examples: self.documents.iter().flatten().cloned().collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = DocHeader {
            schema_version: crate::dataset::DATASET_SCHEMA_VERSION,
            graph: self.map.graph().clone(),
            featurizer: self.map.featurizer(),
            documents: self.m(),
            j: self.j(),
            n_states: self.n_states,
        };
        writeln!(out, "{}", json::to_line(&header)?)?;
        for (i, (doc, states)) in self.documents.iter().zip(&self.states).enumerate() {
            for (pos, (ex, &state)) in doc.iter().zip(states).enumerate() {
                let rec = DocRecord { doc: i, pos, state, example: ex.clone() };
                writeln!(out, "{}", json::to_line(&rec)?)?;
            }
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let read_err = |e: std::io::Error| Error::InvalidInput(format!("read error: {e}"));
        let first = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("document file is empty".into()))?
            .map_err(read_err)?;
        let h: DocHeader =
            serde_json::from_str(&first).map_err(|e| Error::InvalidInput(format!("bad document header: {e}")))?;
        let map = FeatureMap::new(h.graph, h.featurizer)?;
        let mut documents = vec![Vec::with_capacity(h.j); h.documents];
        let mut states = vec![Vec::with_capacity(h.j); h.documents];
        for line in lines {
            let line = line.map_err(read_err)?;
            let rec: DocRecord =
                serde_json::from_str(&line).map_err(|e| Error::InvalidInput(format!("bad document record: {e}")))?;
            if rec.doc >= h.documents || rec.pos != documents[rec.doc].len() || rec.state >= h.n_states {
                return Err(Error::InvalidInput(format!(
                    "record doc={} pos={} out of order or out of range",
                    rec.doc, rec.pos
                )));
            }
            map.check_example(&rec.example)?;
            documents[rec.doc].push(rec.example);
            states[rec.doc].push(rec.state);
        }
        if documents.iter().any(|d| d.len() != h.j) {
            return Err(Error::InvalidInput(format!("every document must have exactly J = {} sentences", h.j)));
        }
        Ok(DocumentDataset { map, documents, states, n_states: h.n_states })
    }
}

/// `m` independent documents of length `J`; document `i` uses stream `i`.
pub fn gen_documents(source: &MarkovSource, emitters: &Emitters, m: usize, j: usize, seed: u64) -> Result<DocumentDataset> {
    if emitters.generators.len() != source.n_states() {
        return Err(Error::InvalidSource(format!(
            "{} emitters for {} states",
            emitters.generators.len(),
            source.n_states()
        )));
    }
    if m == 0 || j == 0 {
        return Err(invalid_param("m/J", "must be positive"));
    }
    let docs: Vec<(Vec<StructuredExample>, Vec<usize>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let path = source.sample_path(j, &mut r);
            let doc = path.iter().map(|&s| emitters.generators[s].sample(&mut r)).collect();
            (doc, path)
        })
        .collect();
    let (documents, states) = docs.into_iter().unzip();
    Ok(DocumentDataset {
        map: emitters.map().clone(),
        documents,
        states,
        n_states: source.n_states(),
    })
}

/// Plug-in `Σ_s π̂(s) TV(P̂^a(s, ·), π̂)` from observed state paths.
pub fn estimate_beta(states: &[Vec<usize>], n_states: usize, a: usize) -> Result<f64> {
    if a == 0 {
        return Err(invalid_param("a", "must be at least 1"));
    }
    let mut visits = vec![0usize; n_states];
    let mut pairs = vec![vec![0usize; n_states]; n_states];
    let mut total = 0usize;
    let mut total_pairs = 0usize;
    for path in states {
        for (k, &s) in path.iter().enumerate() {
            if s >= n_states {
                return Err(invalid_param("states", format!("state {s} out of range")));
            }
            visits[s] += 1;
            total += 1;
            if let Some(&t) = path.get(k + a) {
                pairs[s][t] += 1;
                total_pairs += 1;
            }
        }
    }
    if total_pairs == 0 {
        return Err(Error::InsufficientSamples(format!("no pairs {a} steps apart inside any document")));
    }
    let origin: Vec<usize> = pairs.iter().map(|row| row.iter().sum()).collect();
    if let Some(s) = (0..n_states).find(|&s| origin[s] < 30) {
        return Err(Error::InsufficientSamples(format!(
            "state {s} starts only {} pairs (need ≥ 30)",
            origin[s]
        )));
    }
    let pi: Vec<f64> = visits.iter().map(|&v| v as f64 / total as f64).collect();
    Ok((0..n_states)
        .map(|s| {
            let row = pairs[s].iter().map(|&c| c as f64 / origin[s] as f64);
            pi[s] * tv(row, pi.iter().copied())
        })
        .sum())
}

/// `(1/(mJ)) Σ_i Σ_j L_ρ(z_i^j)`.
pub fn document_risk(w: &[f64], docs: &DocumentDataset, spec: &MarginSpec) -> Result<f64> {
    empirical_risk(w, &docs.pooled(), spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: usize,
    pub beta: f64,
    pub outcome: MixingOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// The feasible `a` with the smallest bound.
    pub best_a: Option<usize>,
}

/// Evaluate the document bound at every admissible block length.
pub fn sweep_feasible_a(
    m: usize,
    j: usize,
    delta: f64,
    empirical_risk: f64,
    profile: &MixingProfile,
    pc: &ProblemConstants,
) -> Result<SweepTable> {
    let mut rows = Vec::new();
    for a in block_lengths(j)? {
        let beta = profile
            .beta(a)
            .ok_or_else(|| invalid_param("profile", format!("no β value for a = {a}")))?;
        let outcome = mixing_bound(m, j, a, beta.clamp(0.0, 1.0), delta, empirical_risk, pc)?;
        rows.push(SweepRow { a, beta, outcome });
    }
    let best_a = rows
        .iter()
        .filter_map(|r| r.outcome.value().map(|v| (r.a, v)))
        .fold(None, |best: Option<(usize, f64)>, (a, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((a, v)),
        })
        .map(|(a, _)| a);
    Ok(SweepTable { rows, best_a })
}

/// Empirical state frequencies, for diagnostics.
pub fn state_frequencies(states: &[Vec<usize>], n_states: usize) -> Vec<f64> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut total = 0;
    for &s in states.iter().flatten() {
        *counts.entry(s).or_default() += 1;
        total += 1;
    }
    (0..n_states)
        .map(|s| counts.get(&s).copied().unwrap_or(0) as f64 / total.max(1) as f64)
        .collect()
}
