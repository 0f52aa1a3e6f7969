//! The two analyzed learners and risk evaluation.
//!
//! SGD starts at `w = 0`, draws `i_t` uniformly with replacement from a
//! seeded stream, and takes constant steps along the selected margin-loss
//! subgradient. RRM minimizes `R_S(w) + (λ/2)‖w‖²` by full-batch subgradient
//! descent with `η_t = 2/(λ(t+1))` and `t`-weighted iterate averaging, which
//! admits the a-posteriori certificate
//!
//! `R^λ(w̄_t) − min R^λ ≤ 2/(λ t (t+1)) · Σ_{s≤t} s/(s+1) · ‖g_s‖²`,
//!
//! itself at most `2G²/(λ(t+1))` for any bound `G ≥ ‖g_s‖`. The argument
//! assumes a convex objective; see [`upper_clip_active`] for when the clipped
//! loss departs from its convex hinge.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid_param, Error, Result};
use crate::loss::{accumulate_subgradient, margin_loss, MarginSpec};
use crate::rng;
use crate::scoring::l2_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub eta: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub record_trajectory: bool,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid_param("T", "need at least one iteration"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid_param("eta", format!("must be finite and nonnegative, got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrmConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl RrmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid_param("lambda", "must be positive and finite"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid_param("tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid_param("max_iters", "must be positive"));
        }
        Ok(())
    }
}

/// Suboptimality certificate of an RRM run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Certified bound on `R^λ(w̄) − min R^λ`.
    pub suboptimality: f64,
    /// Largest subgradient norm seen along the run.
    pub max_subgradient_norm: f64,
    /// `‖w̄ − w_S‖₂ ≤ √(2·suboptimality/λ)` by strong convexity.
    pub distance_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub final_w: Vec<f64>,
    pub averaged_w: Vec<f64>,
    pub index_sequence: Vec<usize>,
    pub objective_history: Option<Vec<f64>>,
    /// `w^{(1)}, …, w^{(T+1)}` when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
    pub certificate: Option<Certificate>,
    pub iterations: usize,
}

/// Constant-step SGD on the margin loss.
pub fn sgd(dataset: &Dataset, spec: &MarginSpec, config: &SgdConfig) -> Result<TrainResult> {
    sgd_observed(dataset, spec, config, |_, _| {})
}

/// SGD calling `observe(t, w^{(t+1)})` after every step `t = 1..=T`.
///
/// The index sequence depends only on `(config.seed, m)`, so two runs on
/// neighbouring datasets with the same config are coupled.
pub fn sgd_observed<F>(
    dataset: &Dataset,
    spec: &MarginSpec,
    config: &SgdConfig,
    mut observe: F,
) -> Result<TrainResult>
where
    F: FnMut(usize, &[f64]),
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let map = &dataset.map;
    let dim = map.dim();
    let m = dataset.len();
    let mut w = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let mut indices = Vec::with_capacity(config.iterations);
    let mut trajectory = config.record_trajectory.then(|| vec![w.clone()]);
    let mut r = rng::stream(config.seed, 0);
    for t in 1..=config.iterations {
        for (s, wi) in sum.iter_mut().zip(&w) {
            *s += wi;
        }
        let i = r.random_range(0..m);
        indices.push(i);
        if config.eta > 0.0 {
            let ex = &dataset.examples[i];
            let eval = margin_loss(map, &w, ex, spec)?;
            accumulate_subgradient(map, ex, spec, &eval, -config.eta, &mut w);
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push(w.clone());
        }
        observe(t, &w);
    }
    let inv_t = 1.0 / config.iterations as f64;
    Ok(TrainResult {
        averaged_w: sum.iter().map(|s| s * inv_t).collect(),
        final_w: w,
        index_sequence: indices,
        objective_history: None,
        trajectory,
        certificate: None,
        iterations: config.iterations,
    })
}

/// `T = ⌈β_T m²⌉`, `η = T^{−3/4}/κ`.
pub fn sgd_schedule(m: usize, kappa: f64, beta_t: f64) -> Result<(usize, f64)> {
    if m == 0 {
        return Err(invalid_param("m", "must be at least 1"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid_param("kappa", "must be positive (degenerate features?)"));
    }
    if !(beta_t > 0.0 && beta_t.is_finite()) {
        return Err(invalid_param("beta_T", "must be positive"));
    }
    let t = (beta_t * (m as f64).powi(2)).ceil() as usize;
    let t = t.max(1);
    Ok((t, (t as f64).powf(-0.75) / kappa))
}

/// `λ = 4√2 κ / (√m ρ ‖w*‖)`.
pub fn lambda_choice(m: usize, rho: f64, kappa: f64, w_star_norm: f64) -> Result<f64> {
    if m == 0 {
        return Err(invalid_param("m", "must be at least 1"));
    }
    for (name, v) in [("rho", rho), ("kappa", kappa), ("w_star_norm", w_star_norm)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid_param(name, "must be positive and finite"));
        }
    }
    Ok(4.0 * 2f64.sqrt() * kappa / ((m as f64).sqrt() * rho * w_star_norm))
}

/// `R_S(h^w)`, the mean clipped margin loss.
pub fn empirical_risk(w: &[f64], dataset: &Dataset, spec: &MarginSpec) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dataset.map.check_weights(w)?;
    let losses = dataset
        .examples
        .par_iter()
        .map(|ex| margin_loss(&dataset.map, w, ex, spec).map(|e| e.clipped_loss))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&losses))
}

/// `R_S(w) + (λ/2)‖w‖²`.
pub fn regularized_objective(w: &[f64], dataset: &Dataset, spec: &MarginSpec, lambda: f64) -> Result<f64> {
    let n = l2_norm(w);
    Ok(empirical_risk(w, dataset, spec)? + 0.5 * lambda * n * n)
}

/// Number of examples whose raw margin exceeds `M` at `w`; there the clipped
/// loss is flat while its convex hinge keeps growing.
pub fn upper_clip_active(w: &[f64], dataset: &Dataset, spec: &MarginSpec) -> Result<usize> {
    let m = spec.loss.max_value(dataset.graph().alphabet_sizes());
    let mut count = 0;
    for ex in &dataset.examples {
        if margin_loss(&dataset.map, w, ex, spec)?.raw_margin > m {
            count += 1;
        }
    }
    Ok(count)
}

/// Regularized risk minimization to a certified suboptimality `tol`.
///
/// Hitting `max_iters` first is not an error; the certificate then reports
/// `converged = false` with the bound actually achieved.
pub fn rrm(dataset: &Dataset, spec: &MarginSpec, config: &RrmConfig) -> Result<TrainResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let map = &dataset.map;
    let dim = map.dim();
    let lambda = config.lambda;
    let inv_m = 1.0 / dataset.len() as f64;
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut weight_sum = 0.0;
    let mut g = vec![0.0; dim];
    let mut history = Vec::new();
    let mut weighted_sq = 0.0;
    let mut g_max: f64 = 0.0;
    let mut cert = f64::INFINITY;
    let mut t = 0;
    while t < config.max_iters {
        t += 1;
        let evals = dataset
            .examples
            .par_iter()
            .map(|ex| margin_loss(map, &w, ex, spec))
            .collect::<Result<Vec<_>>>()?;
        let norm_w = l2_norm(&w);
        history.push(mean(&evals.iter().map(|e| e.clipped_loss).collect::<Vec<_>>()) + 0.5 * lambda * norm_w * norm_w);
        for (gi, wi) in g.iter_mut().zip(&w) {
            *gi = lambda * wi;
        }
        for (ex, eval) in dataset.examples.iter().zip(&evals) {
            accumulate_subgradient(map, ex, spec, eval, inv_m, &mut g);
        }
        let gn = l2_norm(&g);
        g_max = g_max.max(gn);
        let tf = t as f64;
        weighted_sq += tf / (tf + 1.0) * gn * gn;
        // w̄_t averages w_1..w_t with weights s.
        weight_sum += tf;
        let mix = tf / weight_sum;
        for (a, wi) in avg.iter_mut().zip(&w) {
            *a += mix * (wi - *a);
        }
        cert = 2.0 * weighted_sq / (lambda * tf * (tf + 1.0));
        if cert <= config.tol {
            break;
        }
        let eta = 2.0 / (lambda * (tf + 1.0));
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= eta * gi;
        }
    }
    let converged = cert <= config.tol;
    Ok(TrainResult {
        final_w: w,
        averaged_w: avg,
        index_sequence: Vec::new(),
        objective_history: Some(history),
        trajectory: None,
        certificate: Some(Certificate {
            suboptimality: cert,
            max_subgradient_norm: g_max,
            distance_bound: (2.0 * cert / lambda).sqrt(),
            iterations: t,
            converged,
        }),
        iterations: t,
    })
}

/// Neumaier-compensated mean.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / values.len() as f64
}
