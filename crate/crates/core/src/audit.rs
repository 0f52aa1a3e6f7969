//! Empirical checks of the provable properties against measurements.
//!
//! Every check is a pure function of its configuration and master seed.
//! Trial `k` draws from stream `(seed, k)`; trials run in parallel and are
//! collected in index order, so verdicts do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{generalization_bound_hp, rademacher_bound, rrm_stability_bound, sgd_stability_bound_constant, ProblemConstants};
use crate::datagen::{Generator, GeneratorConfig};
use crate::dataset::Dataset;
use crate::error::{invalid_param, Error, Result};
use crate::graph::{LabelAssignment, DEFAULT_ENUMERATION_CAP};
use crate::inference::{decode, InferenceMethod, MethodChoice};
use crate::loss::{margin_loss, margin_loss_with, margin_subgradient, MarginSpec};
use crate::rng::{self, StreamRng};
use crate::scoring::{compute_kappa, compute_psi_star, l2_norm, project_l2, FeatureMap, Featurizer, StructuredExample, StructuredInput};
use crate::train::{empirical_risk, mean, rrm, sgd, sgd_observed, sgd_schedule, RrmConfig, SgdConfig};

/// Tolerance for the exact inequalities (Lipschitz, dominance).
pub const EXACT_TOL: f64 = 1e-9;

fn brute() -> MethodChoice {
    MethodChoice::Force(InferenceMethod::BruteForce)
}

/// Gaussian input with the shape `map` expects.
pub fn random_input(map: &FeatureMap, r: &mut StreamRng, scale: f64) -> StructuredInput {
    let g = map.graph();
    match map.featurizer() {
        Featurizer::ChainCrf { n } => {
            StructuredInput::Contexts((0..g.num_vars()).map(|_| rng::gaussian_vec(r, n, scale)).collect())
        }
        Featurizer::Tables { dim } => StructuredInput::Tables(
            (0..g.num_factors())
                .map(|f| (0..g.factor_size(f)).map(|_| rng::gaussian_vec(r, dim, scale)).collect())
                .collect(),
        ),
    }
}

pub fn random_labels(map: &FeatureMap, r: &mut StreamRng) -> LabelAssignment {
    LabelAssignment(map.graph().alphabet_sizes().iter().map(|&c| r.random_range(0..c)).collect())
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Outcome of a check that reduces to one worst-case statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationResult {
    pub n_trials: usize,
    pub max_violation: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Per-trial violation, in trial order.
    pub per_trial: Vec<f64>,
}

impl ViolationResult {
    fn from_trials(per_trial: Vec<f64>, threshold: f64) -> Self {
        let max_violation = max_of(&per_trial);
        ViolationResult {
            n_trials: per_trial.len(),
            pass: max_violation <= threshold,
            max_violation,
            threshold,
            per_trial,
        }
    }
}

/// `|L_ρ(w) − L_ρ(w̃)| − (2/ρ) max_{y'} |h_w(y') − h_w̃(y')|` over random draws,
/// both sides by enumeration.
pub fn check_lipschitz(map: &FeatureMap, spec: &MarginSpec, n_trials: usize, scale: f64, seed: u64) -> Result<ViolationResult> {
    let g = map.graph();
    crate::graph::check_cap(g.label_space_size(), DEFAULT_ENUMERATION_CAP)?;
    let labelings: Vec<Vec<usize>> = g.enumerate(DEFAULT_ENUMERATION_CAP)?.collect();
    let dim = map.dim();
    let per_trial = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let x = random_input(map, &mut r, scale);
            let y = random_labels(map, &mut r);
            let w = rng::gaussian_vec(&mut r, dim, scale);
            let w2: Vec<f64> = match k % 3 {
                0 => rng::gaussian_vec(&mut r, dim, scale),
                1 => {
                    let d = rng::gaussian_vec(&mut r, dim, 1e-3 * scale);
                    w.iter().zip(&d).map(|(a, b)| a + b).collect()
                }
                _ => {
                    let mut v = w.clone();
                    let j = r.random_range(0..dim);
                    v[j] += 1e-6 * scale * if r.random::<bool>() { 1.0 } else { -1.0 };
                    v
                }
            };
            let ex = StructuredExample { x, y };
            let a = margin_loss_with(map, &w, &ex, spec, brute(), DEFAULT_ENUMERATION_CAP)?.clipped_loss;
            let b = margin_loss_with(map, &w2, &ex, spec, brute(), DEFAULT_ENUMERATION_CAP)?.clipped_loss;
            let pa = map.potentials(&w, &ex.x)?;
            let pb = map.potentials(&w2, &ex.x)?;
            let dh = labelings
                .iter()
                .map(|y| (pa.score(g, y) - pb.score(g, y)).abs())
                .fold(0.0, f64::max);
            Ok((a - b).abs() - 2.0 * spec.inv_rho() * dh)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ViolationResult::from_trials(per_trial, EXACT_TOL))
}

/// `L(ŷ(x), y) − L_ρ(x, y, h)` over random draws; never positive in theory.
pub fn check_dominance(map: &FeatureMap, spec: &MarginSpec, n_trials: usize, seed: u64) -> Result<ViolationResult> {
    crate::graph::check_cap(map.graph().label_space_size(), DEFAULT_ENUMERATION_CAP)?;
    let dim = map.dim();
    let per_trial = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let x = random_input(map, &mut r, 1.0);
            let y = random_labels(map, &mut r);
            let w = if k % 10 == 0 { vec![0.0; dim] } else { rng::gaussian_vec(&mut r, dim, 1.0) };
            let ex = StructuredExample { x, y };
            let lr = margin_loss_with(map, &w, &ex, spec, brute(), DEFAULT_ENUMERATION_CAP)?.clipped_loss;
            let yhat = decode(map, &w, &ex.x, brute(), DEFAULT_ENUMERATION_CAP)?.assignment;
            Ok(spec.loss.eval(&yhat, &ex.y)? - lr)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ViolationResult::from_trials(per_trial, EXACT_TOL))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckResult {
    pub accepted: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Relative error of each accepted draw.
    pub per_trial: Vec<f64>,
}

/// Central finite differences vs the analytic subgradient on draws away from
/// the kinks of the loss: `‖g_fd − g‖₂ / max(‖g_fd‖₂, ‖g‖₂)` per draw, with
/// `g_fd` built coordinate by coordinate.
pub fn grad_check(map: &FeatureMap, spec: &MarginSpec, n_accept: usize, epsilon: f64, seed: u64) -> Result<GradCheckResult> {
    if !(epsilon > 0.0) {
        return Err(invalid_param("epsilon", "must be positive"));
    }
    let g = map.graph();
    crate::graph::check_cap(g.label_space_size(), DEFAULT_ENUMERATION_CAP)?;
    let big_m = spec.loss.max_value(g.alphabet_sizes());
    let dim = map.dim();
    let max_draws = 50 * n_accept.max(1);
    let mut trials: Vec<Option<f64>> = Vec::new();
    let batch = n_accept.max(64);
    while trials.iter().filter(|t| t.is_some()).count() < n_accept && trials.len() < max_draws {
        let start = trials.len();
        let next = (start..start + batch)
            .into_par_iter()
            .map(|k| grad_trial(map, spec, big_m, dim, epsilon, seed, k))
            .collect::<Result<Vec<_>>>()?;
        trials.extend(next);
    }
    // Keep exactly the first n_accept accepted draws.
    let mut accepted = Vec::new();
    let mut skipped = 0;
    for t in trials {
        if accepted.len() == n_accept {
            break;
        }
        match t {
            Some(e) => accepted.push(e),
            None => skipped += 1,
        }
    }
    if accepted.is_empty() {
        return Err(Error::AllDegenerate(skipped));
    }
    let max_rel_error = max_of(&accepted);
    Ok(GradCheckResult {
        accepted: accepted.len(),
        skipped,
        pass: max_rel_error <= 1e-4 && accepted.len() >= n_accept,
        max_rel_error,
        threshold: 1e-4,
        per_trial: accepted,
    })
}

fn grad_trial(
    map: &FeatureMap,
    spec: &MarginSpec,
    big_m: f64,
    dim: usize,
    epsilon: f64,
    seed: u64,
    k: usize,
) -> Result<Option<f64>> {
    let g = map.graph();
    let mut r = rng::stream(seed, k as u64);
    let x = random_input(map, &mut r, 1.0);
    let y = random_labels(map, &mut r);
    let w = rng::gaussian_vec(&mut r, dim, 1.0);
    let ex = StructuredExample { x, y };
    let kappa = compute_kappa(std::slice::from_ref(&ex), map, DEFAULT_ENUMERATION_CAP)?.value;
    let margin_scale = 10.0 * epsilon * 2.0 * kappa * spec.inv_rho();
    // Top two competitor values by enumeration.
    let pots = map.potentials(&w, &ex.x)?;
    let truth = pots.score(g, ex.y.labels());
    let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for cand in g.enumerate(DEFAULT_ENUMERATION_CAP)? {
        if cand.as_slice() == ex.y.labels() {
            continue;
        }
        let v = spec.loss.eval_slices(&cand, ex.y.labels()) - spec.inv_rho() * (truth - pots.score(g, &cand));
        if v > best {
            second = best;
            best = v;
        } else if v > second {
            second = v;
        }
    }
    let near_kink = best.abs() <= margin_scale || (best - big_m).abs() <= margin_scale;
    let tied = best - second <= margin_scale;
    if near_kink || tied {
        return Ok(None);
    }
    let grad = margin_subgradient(map, &w, &ex, spec)?;
    let mut fd = vec![0.0; dim];
    let mut probe = w.clone();
    for j in 0..dim {
        probe[j] = w[j] + epsilon;
        let lp = margin_loss(map, &probe, &ex, spec)?.clipped_loss;
        probe[j] = w[j] - epsilon;
        let lm = margin_loss(map, &probe, &ex, spec)?.clipped_loss;
        probe[j] = w[j];
        fd[j] = (lp - lm) / (2.0 * epsilon);
    }
    let diff: Vec<f64> = fd.iter().zip(&grad).map(|(a, b)| a - b).collect();
    let denom = l2_norm(&fd).max(l2_norm(&grad)).max(1e-12);
    Ok(Some(l2_norm(&diff) / denom))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProbeResult {
    pub t_values: Vec<usize>,
    /// Mean over trials of `‖w^{(t+1)} − ŵ^{(t+1)}‖²`.
    pub measured_sq_dist: Vec<f64>,
    pub bound_values: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub kappa: f64,
    pub coupled: bool,
    pub pass: bool,
    /// `per_trial[k][c]` is trial `k` at checkpoint `c`.
    pub per_trial: Vec<Vec<f64>>,
}

/// A neighbouring dataset: example `position` replaced by `replacement`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub position: usize,
    pub replacement: StructuredExample,
}

impl Perturbation {
    pub fn draw(gen: &Generator, m: usize, r: &mut StreamRng) -> Self {
        let position = r.random_range(0..m);
        let replacement = gen.sample(r);
        Perturbation { position, replacement }
    }

    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        let mut examples = dataset.examples.clone();
        examples[self.position] = self.replacement.clone();
        dataset.with_examples(examples)
    }
}

fn kappa_over(dataset: &Dataset, extra: impl Iterator<Item = StructuredExample>) -> Result<f64> {
    let mut all = dataset.examples.clone();
    all.extend(extra);
    Ok(compute_kappa(&all, &dataset.map, DEFAULT_ENUMERATION_CAP)?.value)
}

/// Runs SGD on `S` and on `n_trials` neighbours `S′` and compares the mean
/// squared iterate distance with the stability bound at each checkpoint.
///
/// Coupled runs share the index sequence; uncoupled runs (diagnostics only)
/// give `S′` its own sampling stream.
#[allow(clippy::too_many_arguments)]
pub fn probe_sgd_stability(
    gen: &Generator,
    dataset: &Dataset,
    spec: &MarginSpec,
    eta: f64,
    iterations: usize,
    checkpoints: &[usize],
    n_trials: usize,
    seed: u64,
    coupled: bool,
) -> Result<StabilityProbeResult> {
    let m = dataset.len();
    if m < 2 {
        return Err(invalid_param("m", "need at least two examples"));
    }
    if let Some(&t) = checkpoints.iter().find(|&&t| t > iterations) {
        return Err(invalid_param("checkpoints", format!("checkpoint {t} exceeds T = {iterations}")));
    }
    let perturbations: Vec<(Perturbation, u64)> = (0..n_trials)
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let p = Perturbation::draw(gen, m, &mut r);
            (p, r.random::<u64>())
        })
        .collect();
    let kappa = kappa_over(dataset, perturbations.iter().map(|(p, _)| p.replacement.clone()))?;
    let per_trial = perturbations
        .par_iter()
        .map(|(p, sgd_seed)| {
            let other = p.apply(dataset);
            let cfg = SgdConfig { eta, iterations, seed: *sgd_seed, record_trajectory: false };
            let snapshots = |d: &Dataset, cfg: &SgdConfig| -> Result<Vec<Vec<f64>>> {
                let mut snaps = vec![Vec::new(); checkpoints.len()];
                for (c, &t) in checkpoints.iter().enumerate() {
                    if t == 0 {
                        snaps[c] = vec![0.0; d.map.dim()];
                    }
                }
                sgd_observed(d, spec, cfg, |t, w| {
                    for (c, &ct) in checkpoints.iter().enumerate() {
                        if ct == t {
                            snaps[c] = w.to_vec();
                        }
                    }
                })?;
                Ok(snaps)
            };
            let a = snapshots(dataset, &cfg)?;
            let other_cfg = if coupled { cfg } else { SgdConfig { seed: rng::child_seed(*sgd_seed, 1), ..cfg } };
            let b = snapshots(&other, &other_cfg)?;
            Ok(a.iter()
                .zip(&b)
                .map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum())
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let measured: Vec<f64> = (0..checkpoints.len())
        .map(|c| mean(&per_trial.iter().map(|row| row[c]).collect::<Vec<_>>()))
        .collect();
    let bounds = checkpoints
        .iter()
        .map(|&t| sgd_stability_bound_constant(t, m, kappa, spec.rho, eta))
        .collect::<Result<Vec<f64>>>()?;
    Ok(StabilityProbeResult {
        pass: measured.iter().zip(&bounds).all(|(a, b)| a <= b),
        t_values: checkpoints.to_vec(),
        measured_sq_dist: measured,
        bound_values: bounds,
        n_trials,
        seed,
        kappa,
        coupled,
        per_trial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrmProbeTrial {
    pub position: usize,
    /// `max |L_ρ(x, y, w_S) − L_ρ(x, y, w_S′)|` over the probed points.
    pub max_loss_diff: f64,
    pub weight_distance: f64,
    pub suboptimality: f64,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrmProbeResult {
    pub lambda: f64,
    pub tol: f64,
    pub kappa: f64,
    pub bound: f64,
    pub slack: f64,
    pub base_suboptimality: f64,
    pub max_loss_diff: f64,
    pub n_trials: usize,
    pub pass: bool,
    /// Points probed per trial: training inputs of `S` and `S′`, fresh
    /// inputs, each with every labeling. The sup over all `(x, y)` can only
    /// be larger, so a pass is a necessary condition.
    pub points_per_trial: usize,
    pub trials: Vec<RrmProbeTrial>,
}

/// Tolerance making the solver slack `(2/ρ)κ · 2√(2 tol/λ)` equal to
/// `fraction` of the stability bound.
pub fn rrm_tol_for_slack(bound: f64, fraction: f64, rho: f64, kappa: f64, lambda: f64) -> f64 {
    let per_solution = fraction * bound * rho / (4.0 * kappa);
    0.5 * lambda * per_solution * per_solution
}

/// Solves RRM on `S` and on neighbours `S′` and checks the loss change
/// against `16κ²/(mρ²λ)` plus the certified solver slack.
#[allow(clippy::too_many_arguments)]
pub fn probe_rrm_stability(
    gen: &Generator,
    dataset: &Dataset,
    spec: &MarginSpec,
    lambda: f64,
    slack_fraction: f64,
    n_trials: usize,
    eval_inputs: usize,
    max_iters: usize,
    seed: u64,
) -> Result<RrmProbeResult> {
    let m = dataset.len();
    if m < 2 {
        return Err(invalid_param("m", "need at least two examples"));
    }
    let map = &dataset.map;
    let g = map.graph();
    let labelings: Vec<LabelAssignment> = g.enumerate(DEFAULT_ENUMERATION_CAP)?.map(LabelAssignment).collect();
    let draws: Vec<(Perturbation, Vec<StructuredInput>)> = (0..n_trials)
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let p = Perturbation::draw(gen, m, &mut r);
            let fresh = (0..eval_inputs).map(|_| gen.sample_input(&mut r)).collect();
            (p, fresh)
        })
        .collect();
    let extra = draws.iter().flat_map(|(p, fresh)| {
        std::iter::once(p.replacement.clone()).chain(fresh.iter().map(|x| StructuredExample {
            x: x.clone(),
            y: labelings[0].clone(),
        }))
    });
    let kappa = kappa_over(dataset, extra)?;
    let bound = rrm_stability_bound(m, spec.rho, lambda, kappa)?;
    let tol = rrm_tol_for_slack(bound, slack_fraction, spec.rho, kappa, lambda);
    let slack = 2.0 * spec.inv_rho() * kappa * 2.0 * (2.0 * tol / lambda).sqrt();
    let cfg = RrmConfig { lambda, tol, max_iters };
    let base = rrm(dataset, spec, &cfg)?;
    let base_cert = base.certificate.expect("rrm returns a certificate");
    if !base_cert.converged {
        return Err(Error::InvalidParameter {
            name: "max_iters",
            reason: format!("RRM on S did not reach tol {tol:e} (got {:e})", base_cert.suboptimality),
        });
    }
    let w_s = base.averaged_w;
    let trials = draws
        .par_iter()
        .map(|(p, fresh)| {
            let other = p.apply(dataset);
            let res = rrm(&other, spec, &cfg)?;
            let cert = res.certificate.expect("rrm returns a certificate");
            if !cert.converged {
                return Err(Error::InvalidParameter {
                    name: "max_iters",
                    reason: format!("RRM on S′ did not reach tol {tol:e}"),
                });
            }
            let w_o = res.averaged_w;
            let inputs = dataset
                .examples
                .iter()
                .map(|e| &e.x)
                .chain(std::iter::once(&p.replacement.x))
                .chain(fresh.iter());
            let mut worst: f64 = 0.0;
            for x in inputs {
                for y in &labelings {
                    let ex = StructuredExample { x: x.clone(), y: y.clone() };
                    let a = margin_loss(map, &w_s, &ex, spec)?.clipped_loss;
                    let b = margin_loss(map, &w_o, &ex, spec)?.clipped_loss;
                    worst = worst.max((a - b).abs());
                }
            }
            let dist = l2_norm(&w_s.iter().zip(&w_o).map(|(a, b)| a - b).collect::<Vec<_>>());
            Ok(RrmProbeTrial {
                position: p.position,
                max_loss_diff: worst,
                weight_distance: dist,
                suboptimality: cert.suboptimality,
                held: worst <= bound + slack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_loss_diff = trials.iter().map(|t| t.max_loss_diff).fold(0.0, f64::max);
    Ok(RrmProbeResult {
        lambda,
        tol,
        kappa,
        bound,
        slack,
        base_suboptimality: base_cert.suboptimality,
        max_loss_diff,
        n_trials,
        pass: trials.iter().all(|t| t.held),
        points_per_trial: (m + 1 + eval_inputs) * labelings.len(),
        trials,
    })
}

/// Learner used by the generalization-gap audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum TrainAlgorithm {
    /// SGD at `T = ⌈β_T m²⌉`, `η = T^{−3/4}/κ` with κ measured on the sample.
    SgdSchedule { beta_t: f64 },
    Sgd { eta: f64, iterations: usize },
    Rrm { lambda: f64, tol: f64, max_iters: usize },
}

impl TrainAlgorithm {
    /// Returns the model that the theory speaks about (averaged iterate).
    pub fn fit(&self, dataset: &Dataset, spec: &MarginSpec, seed: u64) -> Result<Vec<f64>> {
        Ok(match *self {
            TrainAlgorithm::SgdSchedule { beta_t } => {
                let kappa = compute_kappa(&dataset.examples, &dataset.map, DEFAULT_ENUMERATION_CAP)?.value;
                let (iterations, eta) = sgd_schedule(dataset.len(), kappa, beta_t)?;
                sgd(dataset, spec, &SgdConfig { eta, iterations, seed, record_trajectory: false })?.averaged_w
            }
            TrainAlgorithm::Sgd { eta, iterations } => {
                sgd(dataset, spec, &SgdConfig { eta, iterations, seed, record_trajectory: false })?.averaged_w
            }
            TrainAlgorithm::Rrm { lambda, tol, max_iters } => {
                rrm(dataset, spec, &RrmConfig { lambda, tol, max_iters })?.averaged_w
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTrialRecord {
    pub train_risk: f64,
    pub test_risk: f64,
    pub gap: f64,
    /// Bound on the gap: complexity plus confidence terms.
    pub bound: f64,
    /// `train_risk + bound`, the bound on the population risk.
    pub risk_bound: f64,
    pub lambda_used: f64,
    pub psi_star: f64,
    pub vacuous: bool,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub records: Vec<GapTrialRecord>,
    pub held_count: usize,
    pub held_fraction: f64,
    pub required_fraction: f64,
    pub pass: bool,
}

/// Train/test gap vs the high-probability bound over independent draws.
///
/// The bound uses `Λ = max(lambda_ball, ‖w‖₂)` for the learned `w`, `Ψ*`
/// measured on the training and test inputs, `q = 2`, and the test risk on
/// `m_test` fresh examples as the population proxy.
#[allow(clippy::too_many_arguments)]
pub fn measure_gap(
    gen: &Generator,
    m: usize,
    m_test: usize,
    alg: &TrainAlgorithm,
    spec: &MarginSpec,
    n_repeats: usize,
    delta: f64,
    lambda_ball: f64,
    required_fraction: f64,
    seed: u64,
) -> Result<GapResult> {
    if m < 2 || m_test == 0 {
        return Err(invalid_param("m", "need m ≥ 2 and a nonempty test set"));
    }
    let g = gen.map.graph();
    let max_loss = spec.loss.max_value(g.alphabet_sizes());
    let records = (0..n_repeats)
        .into_par_iter()
        .map(|k| {
            let trial_seed = rng::child_seed(seed, k as u64);
            let train = gen.dataset(m, rng::child_seed(trial_seed, 0));
            let test = gen.dataset(m_test, rng::child_seed(trial_seed, 1));
            let w = alg.fit(&train, spec, rng::child_seed(trial_seed, 2))?;
            let train_risk = empirical_risk(&w, &train, spec)?;
            let test_risk = empirical_risk(&w, &test, spec)?;
            let mut inputs = train.examples.clone();
            inputs.extend(test.examples.iter().cloned());
            let psi_star = compute_psi_star(&inputs, &gen.map, 2.0)?;
            let lambda_used = lambda_ball.max(l2_norm(&w));
            let pc = ProblemConstants {
                m,
                d: g.d(),
                f_count: g.num_factors(),
                psi_star,
                lambda_ball: lambda_used,
                rho: spec.rho,
                q: 2.0,
                max_loss,
                kappa: 0.0,
                delta,
                lambda: None,
                w_star_norm: None,
                eta: None,
                iterations: None,
                empirical_risk: None,
            };
            let risk_bound = generalization_bound_hp(&pc, train_risk)?;
            let bound = risk_bound - train_risk;
            let gap = test_risk - train_risk;
            Ok(GapTrialRecord {
                train_risk,
                test_risk,
                gap,
                bound,
                risk_bound,
                lambda_used,
                psi_star,
                vacuous: risk_bound > max_loss,
                held: gap <= bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let held_count = records.iter().filter(|r| r.held).count();
    let held_fraction = held_count as f64 / n_repeats.max(1) as f64;
    Ok(GapResult {
        records,
        held_count,
        held_fraction,
        required_fraction,
        pass: held_fraction >= required_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    /// Lower estimate of the empirical Rademacher complexity of the loss class.
    pub estimate: f64,
    pub per_sigma: Vec<f64>,
    /// Best `w` found for each σ (warm starts for a larger ball).
    #[serde(skip)]
    pub maximizers: Vec<Vec<f64>>,
    pub n_sigma: usize,
    pub restarts: usize,
    pub ascent_iters: usize,
    pub lambda_ball: f64,
}

/// Monte-Carlo lower estimate of `E_σ sup_{‖w‖₂ ≤ Λ} (1/m) Σ σ_i L_ρ(x_i, y_i, w)`
/// by projected subgradient ascent from `w = 0`, `restarts` random points
/// and any `warm_starts` (one per σ), keeping the best value visited.
#[allow(clippy::too_many_arguments)]
pub fn estimate_rademacher(
    dataset: &Dataset,
    spec: &MarginSpec,
    lambda_ball: f64,
    n_sigma: usize,
    restarts: usize,
    ascent_iters: usize,
    seed: u64,
    warm_starts: Option<&[Vec<f64>]>,
) -> Result<RademacherEstimate> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lambda_ball >= 0.0) {
        return Err(invalid_param("Lambda", "must be nonnegative"));
    }
    if let Some(ws) = warm_starts {
        if ws.len() != n_sigma {
            return Err(invalid_param("warm_starts", "need one start per σ draw"));
        }
    }
    let map = &dataset.map;
    let dim = map.dim();
    let m = dataset.len();
    let kappa = compute_kappa(&dataset.examples, map, DEFAULT_ENUMERATION_CAP)?.value;
    let grad_scale = (2.0 * kappa * spec.inv_rho()).max(1e-12);
    let objective_and_grad = |sigma: &[f64], w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut value = 0.0;
        let mut grad = vec![0.0; dim];
        for (s, ex) in sigma.iter().zip(&dataset.examples) {
            let eval = margin_loss(map, w, ex, spec)?;
            value += s * eval.clipped_loss;
            crate::loss::accumulate_subgradient(map, ex, spec, &eval, *s / m as f64, &mut grad);
        }
        Ok((value / m as f64, grad))
    };
    let results = (0..n_sigma)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let sigma = rng::signs(&mut r, m);
            let mut starts = vec![vec![0.0; dim]];
            for _ in 0..restarts {
                let radius = lambda_ball * r.random::<f64>().powf(1.0 / dim as f64);
                starts.push(rng::sphere_vec(&mut r, dim, radius));
            }
            if let Some(ws) = warm_starts {
                starts.push(project_l2(&ws[k], lambda_ball));
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_w = vec![0.0; dim];
            for start in starts {
                let mut w = start;
                for it in 0..=ascent_iters {
                    let (v, grad) = objective_and_grad(&sigma, &w)?;
                    if v > best {
                        best = v;
                        best_w.clone_from(&w);
                    }
                    if it == ascent_iters || lambda_ball == 0.0 {
                        break;
                    }
                    let step = lambda_ball / (grad_scale * ((it + 1) as f64).sqrt());
                    let moved: Vec<f64> = w.iter().zip(&grad).map(|(a, b)| a + step * b).collect();
                    w = project_l2(&moved, lambda_ball);
                }
            }
            Ok((best, best_w))
        })
        .collect::<Result<Vec<_>>>()?;
    let (per_sigma, maximizers): (Vec<f64>, Vec<Vec<f64>>) = results.into_iter().unzip();
    Ok(RademacherEstimate {
        estimate: mean(&per_sigma),
        per_sigma,
        maximizers,
        n_sigma,
        restarts,
        ascent_iters,
        lambda_ball,
    })
}

/// Compares a Rademacher estimate with the evaluated complexity bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherVerdict {
    pub estimate: RademacherEstimate,
    pub bound: f64,
    pub constants: ProblemConstants,
    pub pass: bool,
}

pub fn rademacher_verdict(estimate: RademacherEstimate, dataset: &Dataset, spec: &MarginSpec, delta: f64) -> Result<RademacherVerdict> {
    let g = dataset.graph();
    let pc = ProblemConstants {
        m: dataset.len(),
        d: g.d(),
        f_count: g.num_factors(),
        psi_star: compute_psi_star(&dataset.examples, &dataset.map, 2.0)?,
        lambda_ball: estimate.lambda_ball,
        rho: spec.rho,
        q: 2.0,
        max_loss: spec.loss.max_value(g.alphabet_sizes()),
        kappa: compute_kappa(&dataset.examples, &dataset.map, DEFAULT_ENUMERATION_CAP)?.value,
        delta,
        lambda: None,
        w_star_norm: None,
        eta: None,
        iterations: None,
        empirical_risk: None,
    };
    let bound = rademacher_bound(&pc)?;
    Ok(RademacherVerdict {
        pass: estimate.estimate <= bound,
        estimate,
        bound,
        constants: pc,
    })
}

/// Test risk of SGD at the `T = ⌈β_T m²⌉`, `η = T^{−3/4}/κ` schedule as `m` grows.
///
/// On noise-free data the infimum of the margin risk over all `w` is 0
/// (scaling the teacher pushes every margin past the clip), so the test risk
/// is the excess risk. Seed `s` fixes one teacher; its training sets are
/// nested prefixes across `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub m_values: Vec<usize>,
    pub mean_excess_risk: Vec<f64>,
    /// `per_seed[s][k]` is seed `s` at `m_values[k]`.
    pub per_seed: Vec<Vec<f64>>,
    /// Least-squares slope of `log risk` against `log m`.
    pub slope: f64,
    pub m_test: usize,
}

pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[allow(clippy::too_many_arguments)]
pub fn learning_curve(
    base: &GeneratorConfig,
    spec: &MarginSpec,
    m_values: &[usize],
    beta_t: f64,
    n_seeds: usize,
    m_test: usize,
    seed: u64,
) -> Result<LearningCurve> {
    if base.noise != 0.0 {
        return Err(invalid_param("noise", "the excess-risk curve needs noise-free data"));
    }
    if m_values.len() < 2 || n_seeds == 0 || m_test == 0 {
        return Err(invalid_param("m_values", "need two sizes, one seed and a test set"));
    }
    let jobs: Vec<(usize, usize)> = (0..n_seeds).flat_map(|s| (0..m_values.len()).map(move |k| (s, k))).collect();
    let risks = jobs
        .par_iter()
        .map(|&(s, k)| {
            let gseed = rng::child_seed(seed, s as u64);
            let gen = Generator::new(&GeneratorConfig { seed: gseed, ..*base })?;
            let train = gen.dataset(m_values[k], rng::child_seed(gseed, 1));
            let test = gen.dataset(m_test, rng::child_seed(gseed, 2));
            let w = TrainAlgorithm::SgdSchedule { beta_t }.fit(&train, spec, rng::child_seed(gseed, 3))?;
            empirical_risk(&w, &test, spec)
        })
        .collect::<Result<Vec<f64>>>()?;
    let per_seed: Vec<Vec<f64>> = risks.chunks(m_values.len()).map(<[f64]>::to_vec).collect();
    let mean_excess_risk: Vec<f64> = (0..m_values.len())
        .map(|k| mean(&per_seed.iter().map(|row| row[k]).collect::<Vec<_>>()))
        .collect();
    let xs: Vec<f64> = m_values.iter().map(|&m| m as f64).collect();
    Ok(LearningCurve {
        slope: log_log_slope(&xs, &mean_excess_risk),
        m_values: m_values.to_vec(),
        mean_excess_risk,
        per_seed,
        m_test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_chain_dataset, GeneratorConfig, Scenario};
    use crate::graph::FactorGraph;
    use crate::loss::TaskLoss;

    fn chain_map(l: usize, c: usize) -> FeatureMap {
        FeatureMap::new(FactorGraph::chain(l, 2, c).unwrap(), Featurizer::ChainCrf { n: 3 }).unwrap()
    }

    fn gen_cfg(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            scenario: Scenario::ChainMarkovNet { l: 4, c: 3, v: 2, n: 5 },
            noise: 0.0,
            teacher_norm: 3.0,
            seed,
        }
    }

    #[test]
    fn lipschitz_and_dominance_hold() {
        for rho in [0.5, 1.0, 2.0] {
            for loss in [TaskLoss::HammingUnnormalized, TaskLoss::HammingNormalized, TaskLoss::ZeroOne] {
                let spec = MarginSpec::new(rho, loss).unwrap();
                let map = chain_map(3, 3);
                let lip = check_lipschitz(&map, &spec, 300, 1.0, 1).unwrap();
                assert!(lip.pass, "{:?}", lip.max_violation);
                let dom = check_dominance(&map, &spec, 300, 2).unwrap();
                assert!(dom.pass, "{:?}", dom.max_violation);
            }
        }
    }

    #[test]
    fn identical_weights_give_zero_lipschitz_sides() {
        let map = chain_map(3, 2);
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        let res = check_lipschitz(&map, &spec, 30, 0.0, 5).unwrap();
        // scale 0: x = 0 and w = w̃ = 0
        assert!(res.per_trial.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradcheck_accepts_and_passes() {
        let map = chain_map(3, 3);
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        let res = grad_check(&map, &spec, 100, 1e-5, 3).unwrap();
        assert_eq!(res.accepted, 100);
        assert!(res.pass, "max rel error {}", res.max_rel_error);
    }

    #[test]
    fn coupled_probe_with_identical_neighbour_is_zero() {
        let g = Generator::new(&gen_cfg(1)).unwrap();
        let d = g.dataset(10, 5);
        // eta = 0 never moves
        let res = probe_sgd_stability(&g, &d, &MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap(), 0.0, 50, &[0, 10, 50], 5, 1, true).unwrap();
        assert!(res.measured_sq_dist.iter().all(|&v| v == 0.0));
        assert_eq!(res.bound_values[0], 0.0);
        assert!(res.pass);
    }

    #[test]
    fn coupled_runs_on_same_data_coincide() {
        let g = Generator::new(&gen_cfg(2)).unwrap();
        let d = g.dataset(12, 6);
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        let cfg = SgdConfig { eta: 0.05, iterations: 100, seed: 4, record_trajectory: false };
        let p = Perturbation { position: 3, replacement: d.examples[3].clone() };
        let same = p.apply(&d);
        let a = sgd(&d, &spec, &cfg).unwrap();
        let b = sgd(&same, &spec, &cfg).unwrap();
        assert_eq!(a.final_w, b.final_w);
    }

    #[test]
    fn sgd_probe_small() {
        let g = Generator::new(&gen_cfg(3)).unwrap();
        let d = g.dataset(20, 7);
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        let res = probe_sgd_stability(&g, &d, &spec, 0.01, 100, &[0, 50, 100], 20, 9, true).unwrap();
        assert!(res.pass, "{:?} vs {:?}", res.measured_sq_dist, res.bound_values);
        assert_eq!(res.measured_sq_dist[0], 0.0);
    }

    #[test]
    fn rrm_probe_huge_lambda() {
        let g = Generator::new(&gen_cfg(4)).unwrap();
        let d = g.dataset(10, 8);
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        let res = probe_rrm_stability(&g, &d, &spec, 1e4, 0.1, 3, 2, 100_000, 3).unwrap();
        assert!(res.pass);
        assert!(res.trials.iter().all(|t| t.weight_distance < 1e-2));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [10.0, 20.0, 40.0, 80.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn learning_curve_rejects_noise() {
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        assert!(learning_curve(&GeneratorConfig { noise: 0.1, ..gen_cfg(1) }, &spec, &[5, 10], 1.0, 1, 10, 0).is_err());
        let c = learning_curve(&gen_cfg(1), &spec, &[5, 10], 1.0, 2, 20, 0).unwrap();
        assert_eq!(c.per_seed.len(), 2);
        assert!(c.mean_excess_risk.iter().all(|r| (0.0..=4.0).contains(r)));
    }

    #[test]
    fn rrm_tol_matches_slack_fraction() {
        let tol = rrm_tol_for_slack(2.0, 0.1, 1.0, 3.0, 0.5);
        let slack = 2.0 * 3.0 * 2.0 * (2.0 * tol / 0.5f64).sqrt();
        assert!((slack - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gap_degenerate_generator() {
        let g = Generator::new(&gen_cfg(5)).unwrap();
        let res = measure_gap(&g, 20, 200, &TrainAlgorithm::Sgd { eta: 0.01, iterations: 200 }, &MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap(), 3, 0.05, 1.0, 0.95, 1).unwrap();
        assert!(res.pass);
        assert!(res.records.iter().all(|r| r.vacuous && r.held));
    }

    #[test]
    fn rademacher_estimate_properties() {
        let gen = gen_chain_dataset(
            &GeneratorConfig { scenario: Scenario::ChainMarkovNet { l: 3, c: 3, v: 2, n: 3 }, noise: 0.1, teacher_norm: 1.0, seed: 6 },
            20,
        )
        .unwrap();
        let d = gen.dataset;
        let spec = MarginSpec::new(1.0, TaskLoss::HammingUnnormalized).unwrap();
        // Λ = 0: constant objective
        let zero = estimate_rademacher(&d, &spec, 0.0, 8, 2, 5, 1, None).unwrap();
        for (k, v) in zero.per_sigma.iter().enumerate() {
            let sigma = rng::signs(&mut rng::stream(1, k as u64), 20);
            let direct: f64 = sigma.iter().map(|s| s * 3.0).sum::<f64>() / 20.0;
            assert!((v - direct).abs() < 1e-12);
        }
        let small = estimate_rademacher(&d, &spec, 1.0, 8, 2, 20, 1, None).unwrap();
        for (v, z) in small.per_sigma.iter().zip(&zero.per_sigma) {
            assert!(v >= z);
        }
        let big = estimate_rademacher(&d, &spec, 2.0, 8, 2, 20, 1, Some(&small.maximizers)).unwrap();
        assert!(big.estimate >= small.estimate - 1e-9);
        assert!(big.estimate <= 3.0);
        let verdict = rademacher_verdict(small, &d, &spec, 0.05).unwrap();
        assert!(verdict.pass);
    }

    #[test]
    fn rademacher_ascent_below_grid_on_plane() {
        // D = 2 multiclass: exhaustive grid over the disk bounds the ascent.
        let gen = crate::datagen::gen_multiclass(
            &GeneratorConfig { scenario: Scenario::MultiClass { c: 2, n: 1 }, noise: 0.2, teacher_norm: 1.0, seed: 2 },
            30,
        )
        .unwrap();
        let d = gen.dataset;
        let spec = MarginSpec::new(0.5, TaskLoss::ZeroOne).unwrap();
        let est = estimate_rademacher(&d, &spec, 1.0, 4, 4, 50, 3, None).unwrap();
        for (k, v) in est.per_sigma.iter().enumerate() {
            let sigma = rng::signs(&mut rng::stream(3, k as u64), 30);
            let mut grid_max = f64::NEG_INFINITY;
            let steps = 400;
            for i in 0..=steps {
                for j in 0..=steps {
                    let w = [2.0 * i as f64 / steps as f64 - 1.0, 2.0 * j as f64 / steps as f64 - 1.0];
                    if w[0] * w[0] + w[1] * w[1] > 1.0 {
                        continue;
                    }
                    let val: f64 = sigma
                        .iter()
                        .zip(&d.examples)
                        .map(|(s, ex)| s * margin_loss(&d.map, &w, ex, &spec).unwrap().clipped_loss)
                        .sum::<f64>()
                        / 30.0;
                    grid_max = grid_max.max(val);
                }
            }
            // Lipschitz slack of one grid cell
            assert!(*v <= grid_max + 2.0 / 0.5 * 2.0 / steps as f64 * 2f64.sqrt(), "{v} > {grid_max}");
        }
    }
}
