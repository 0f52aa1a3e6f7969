use std::io::BufReader;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sop_core::audit::{self, TrainAlgorithm};
use sop_core::bounds::{BoundReport, ProblemConstants};
use sop_core::mixing::{self, DocumentDataset, Emitters, MarkovSource, MixingProfile};
use sop_core::scoring::{compute_kappa, compute_psi_star, l2_norm};
use sop_core::train::{self, empirical_risk, RrmConfig, SgdConfig};
use sop_core::{Dataset, Generator, DEFAULT_ENUMERATION_CAP};

use crate::args::*;
use crate::output::{num, read_input, InputRecord, Outcome, Table, EXACT, MEASURED, SHAPE};
use crate::CliError;

fn core<T>(r: sop_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidConfig(msg.into())
}

fn read_dataset(path: &Path, inputs: &mut Vec<InputRecord>) -> Result<Dataset, CliError> {
    let bytes = read_input(path, "data", inputs)?;
    Dataset::read_jsonl(BufReader::new(bytes.as_slice())).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn generator(s: &ScenarioArgs) -> Result<Generator, CliError> {
    if s.scenario == ScenarioKind::Chain && (s.l == 0 || s.c < 2 || s.v == 0 || s.v > s.l) {
        return Err(invalid("chain scenario needs l ≥ 1, c ≥ 2 and 1 ≤ v ≤ l"));
    }
    core(Generator::new(&s.generator_config()))
}

fn max_loss(spec: &sop_core::MarginSpec, g: &sop_core::FactorGraph) -> f64 {
    spec.loss.max_value(g.alphabet_sizes())
}

pub fn gen_data(a: &GenDataArgs) -> Result<Outcome, CliError> {
    if a.m == 0 {
        return Err(invalid("m must be positive"));
    }
    let gen = generator(&a.scenario)?;
    let dataset = gen.dataset(a.m, sop_core::rng::child_seed(a.scenario.data_seed, 1));
    let text = dataset.to_jsonl_string();
    write_bytes(&a.data_out, text.as_bytes())?;
    let kappa = core(compute_kappa(&dataset.examples, &dataset.map, DEFAULT_ENUMERATION_CAP))?;
    let result = json!({
        "m": a.m,
        "dim": dataset.map.dim(),
        "d": dataset.graph().d(),
        "F": dataset.graph().num_factors(),
        "kappa": kappa.value,
        "kappa_exact": kappa.exact,
        "psi_star_q2": core(compute_psi_star(&dataset.examples, &dataset.map, 2.0))?,
        "teacher": gen.teacher,
        "dataset_sha256_blob": crate::output::blob_hash(text.as_bytes()),
    });
    Ok(Outcome::new(a, &result)?.provenance(&[("kappa", MEASURED), ("psi_star_q2", MEASURED)]))
}

#[derive(Serialize)]
struct TrainReport {
    algorithm: Algorithm,
    eta: Option<f64>,
    #[serde(rename = "T")]
    iterations: usize,
    lambda: Option<f64>,
    kappa: f64,
    empirical_risk_averaged: f64,
    empirical_risk_final: f64,
    averaged_w_norm: f64,
    final_w: Vec<f64>,
    averaged_w: Vec<f64>,
    certificate: Option<train::Certificate>,
    upper_clip_active: usize,
}

pub fn train_cmd(a: &TrainArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let data = read_dataset(&a.data, &mut inputs)?;
    let spec = core(a.loss.spec())?;
    let kappa = core(compute_kappa(&data.examples, &data.map, DEFAULT_ENUMERATION_CAP))?.value;
    let (res, eta, lambda) = match a.algorithm {
        Algorithm::Sgd => {
            let (t, eta) = match (a.iterations, a.eta) {
                (Some(t), Some(eta)) => (t, eta),
                (t, eta) => {
                    let (st, se) = core(train::sgd_schedule(data.len(), kappa, a.beta_t))?;
                    (t.unwrap_or(st), eta.unwrap_or(se))
                }
            };
            let cfg = SgdConfig { eta, iterations: t, seed: a.seed, record_trajectory: a.trajectory };
            core(cfg.validate())?;
            (core(train::sgd(&data, &spec, &cfg))?, Some(eta), None)
        }
        Algorithm::Rrm => {
            let lambda = match a.lambda {
                Some(l) => l,
                None => core(train::lambda_choice(data.len(), spec.rho, kappa, a.w_star_norm))?,
            };
            let cfg = RrmConfig { lambda, tol: a.tol, max_iters: a.max_iters };
            core(cfg.validate())?;
            (core(train::rrm(&data, &spec, &cfg))?, None, Some(lambda))
        }
    };
    let mut table;
    if let Some(hist) = &res.objective_history {
        table = Table::new(&["iteration", "objective"]);
        for (i, v) in hist.iter().enumerate() {
            table.push(vec![(i + 1).to_string(), num(*v)]);
        }
    } else if let Some(traj) = &res.trajectory {
        table = Table::new(&["t", "index", "w_norm"]);
        for (t, w) in traj.iter().enumerate() {
            let idx = if t == 0 { String::new() } else { res.index_sequence[t - 1].to_string() };
            table.push(vec![(t + 1).to_string(), idx, num(l2_norm(w))]);
        }
    } else {
        table = Table::new(&["t", "index"]);
        for (t, i) in res.index_sequence.iter().enumerate() {
            table.push(vec![(t + 1).to_string(), i.to_string()]);
        }
    }
    let report = TrainReport {
        algorithm: a.algorithm,
        eta,
        iterations: res.iterations,
        lambda,
        kappa,
        empirical_risk_averaged: core(empirical_risk(&res.averaged_w, &data, &spec))?,
        empirical_risk_final: core(empirical_risk(&res.final_w, &data, &spec))?,
        averaged_w_norm: l2_norm(&res.averaged_w),
        certificate: res.certificate,
        upper_clip_active: core(train::upper_clip_active(&res.averaged_w, &data, &spec))?,
        final_w: res.final_w,
        averaged_w: res.averaged_w,
    };
    Ok(Outcome::new(a, &report)?
        .inputs(inputs)
        .provenance(&[
            ("kappa", MEASURED),
            ("empirical_risk_averaged", MEASURED),
            ("empirical_risk_final", MEASURED),
            ("certificate", MEASURED),
        ])
        .table(table))
}

pub fn bounds(a: &BoundsArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let bytes = read_input(&a.constants, "constants", &mut inputs)?;
    let pc: ProblemConstants = serde_json::from_slice(&bytes).map_err(|e| invalid(format!("{}: {e}", a.constants.display())))?;
    let report = core(BoundReport::evaluate(&pc))?;
    let mut table = Table::new(&["bound", "value", "provenance", "vacuous"]);
    let mut prov = Vec::new();
    for (k, v) in &report.values {
        let p = match v.provenance {
            sop_core::bounds::Provenance::Measured => MEASURED,
            sop_core::bounds::Provenance::ExactConstant => EXACT,
            sop_core::bounds::Provenance::ShapeOnly => SHAPE,
        };
        prov.push((format!("values.{k}"), p));
        table.push(vec![k.clone(), num(v.value), p.to_string(), v.vacuous.to_string()]);
    }
    let mut out = Outcome::new(&pc, &report)?.inputs(inputs).table(table);
    for (k, p) in prov {
        out.provenance.insert(k, p);
    }
    Ok(out)
}

fn violation_outcome(cfg: &impl Serialize, res: &audit::ViolationResult, column: &str) -> Result<Outcome, CliError> {
    let mut table = Table::new(&["trial", column]);
    for (i, v) in res.per_trial.iter().enumerate() {
        table.push(vec![i.to_string(), num(*v)]);
    }
    let summary = json!({
        "n_trials": res.n_trials,
        "max_violation": res.max_violation,
        "violations": res.per_trial.iter().filter(|&&v| v > res.threshold).count(),
        "threshold": res.threshold,
    });
    Ok(Outcome::new(cfg, &summary)?
        .provenance(&[("max_violation", MEASURED)])
        .verdict(res.pass)
        .table(table))
}

pub fn lipschitz(a: &LipschitzArgs) -> Result<Outcome, CliError> {
    let gen = generator(&a.scenario)?;
    let spec = core(a.loss.spec())?;
    let res = core(audit::check_lipschitz(&gen.map, &spec, a.trials, a.scale, a.seed))?;
    violation_outcome(a, &res, "violation")
}

pub fn dominance(a: &DominanceArgs) -> Result<Outcome, CliError> {
    let gen = generator(&a.scenario)?;
    let spec = core(a.loss.spec())?;
    let res = core(audit::check_dominance(&gen.map, &spec, a.trials, a.seed))?;
    violation_outcome(a, &res, "task_loss_minus_margin_loss")
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<Outcome, CliError> {
    let gen = generator(&a.scenario)?;
    let spec = core(a.loss.spec())?;
    let res = core(audit::grad_check(&gen.map, &spec, a.accept, a.epsilon, a.seed))?;
    let mut table = Table::new(&["draw", "max_rel_error"]);
    for (i, v) in res.per_trial.iter().enumerate() {
        table.push(vec![i.to_string(), num(*v)]);
    }
    let summary = json!({
        "accepted": res.accepted,
        "skipped": res.skipped,
        "max_rel_error": res.max_rel_error,
        "threshold": res.threshold,
    });
    Ok(Outcome::new(a, &summary)?
        .provenance(&[("max_rel_error", MEASURED)])
        .verdict(res.pass)
        .table(table))
}

pub fn stability_sgd(a: &StabilitySgdArgs) -> Result<Outcome, CliError> {
    if a.checkpoints.is_empty() {
        return Err(invalid("need at least one checkpoint"));
    }
    let gen = generator(&a.scenario)?;
    let spec = core(a.loss.spec())?;
    let data = gen.dataset(a.m, sop_core::rng::child_seed(a.scenario.data_seed, 1));
    let t_max = *a.checkpoints.iter().max().expect("nonempty");
    let res = core(audit::probe_sgd_stability(&gen, &data, &spec, a.eta, t_max, &a.checkpoints, a.trials, a.seed, !a.uncoupled))?;
    let mut table = Table::new(&["trial", "t", "sq_dist"]);
    for (k, row) in res.per_trial.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            table.push(vec![k.to_string(), res.t_values[c].to_string(), num(*v)]);
        }
    }
    let summary = json!({
        "t_values": res.t_values,
        "measured_sq_dist": res.measured_sq_dist,
        "bound_values": res.bound_values,
        "n_trials": res.n_trials,
        "kappa": res.kappa,
        "coupled": res.coupled,
    });
    Ok(Outcome::new(a, &summary)?
        .provenance(&[("measured_sq_dist", MEASURED), ("kappa", MEASURED), ("bound_values", EXACT)])
        .verdict(res.pass)
        .table(table))
}

pub fn stability_rrm(a: &StabilityRrmArgs) -> Result<Outcome, CliError> {
    if !(a.slack_fraction > 0.0) {
        return Err(invalid("slack-fraction must be positive"));
    }
    let gen = generator(&a.scenario)?;
    let spec = core(a.loss.spec())?;
    core(RrmConfig { lambda: a.lambda, tol: 1.0, max_iters: a.max_iters }.validate())?;
    let data = gen.dataset(a.m, sop_core::rng::child_seed(a.scenario.data_seed, 1));
    let res = core(audit::probe_rrm_stability(
        &gen,
        &data,
        &spec,
        a.lambda,
        a.slack_fraction,
        a.trials,
        a.eval_inputs,
        a.max_iters,
        a.seed,
    ))?;
    let mut table = Table::new(&["trial", "position", "max_loss_diff", "weight_distance", "suboptimality", "held"]);
    for (k, t) in res.trials.iter().enumerate() {
        table.push(vec![
            k.to_string(),
            t.position.to_string(),
            num(t.max_loss_diff),
            num(t.weight_distance),
            num(t.suboptimality),
            t.held.to_string(),
        ]);
    }
    let summary = json!({
        "lambda": res.lambda,
        "tol": res.tol,
        "kappa": res.kappa,
        "bound": res.bound,
        "slack": res.slack,
        "base_suboptimality": res.base_suboptimality,
        "max_loss_diff": res.max_loss_diff,
        "n_trials": res.n_trials,
        "points_per_trial": res.points_per_trial,
        "held": res.trials.iter().filter(|t| t.held).count(),
    });
    Ok(Outcome::new(a, &summary)?
        .provenance(&[
            ("max_loss_diff", MEASURED),
            ("kappa", MEASURED),
            ("bound", EXACT),
            ("slack", EXACT),
            ("base_suboptimality", MEASURED),
        ])
        .verdict(res.pass)
        .table(table))
}

pub fn gap(a: &GapArgs) -> Result<Outcome, CliError> {
    let gen = generator(&a.scenario)?;
    let spec = core(a.loss.spec())?;
    let alg = match a.algorithm {
        GapAlgorithm::SgdSchedule => TrainAlgorithm::SgdSchedule { beta_t: a.beta_t },
        GapAlgorithm::Sgd => TrainAlgorithm::Sgd { eta: a.eta, iterations: a.iterations },
        GapAlgorithm::Rrm => TrainAlgorithm::Rrm { lambda: a.lambda, tol: a.tol, max_iters: a.max_iters },
    };
    if !(0.0..=1.0).contains(&a.required_fraction) {
        return Err(invalid("required-fraction must lie in [0, 1]"));
    }
    let m_test = a.m_test.unwrap_or(10 * a.m);
    let res = core(audit::measure_gap(
        &gen,
        a.m,
        m_test,
        &alg,
        &spec,
        a.repeats,
        a.delta,
        a.lambda_ball,
        a.required_fraction,
        a.seed,
    ))?;
    let mut table = Table::new(&["trial", "train_risk", "test_risk", "gap", "bound", "risk_bound", "vacuous", "held"]);
    for (k, r) in res.records.iter().enumerate() {
        table.push(vec![
            k.to_string(),
            num(r.train_risk),
            num(r.test_risk),
            num(r.gap),
            num(r.bound),
            num(r.risk_bound),
            r.vacuous.to_string(),
            r.held.to_string(),
        ]);
    }
    let gaps: Vec<f64> = res.records.iter().map(|r| r.gap).collect();
    let summary = json!({
        "m_test": m_test,
        "held_count": res.held_count,
        "held_fraction": res.held_fraction,
        "required_fraction": res.required_fraction,
        "mean_gap": train::mean(&gaps),
        "max_gap": gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "min_bound": res.records.iter().map(|r| r.bound).fold(f64::INFINITY, f64::min),
        "vacuous_count": res.records.iter().filter(|r| r.vacuous).count(),
    });
    Ok(Outcome::new(a, &summary)?
        .provenance(&[("mean_gap", MEASURED), ("max_gap", MEASURED), ("min_bound", EXACT)])
        .verdict(res.pass)
        .table(table))
}

pub fn rademacher(a: &RademacherArgs) -> Result<Outcome, CliError> {
    let spec = core(a.loss.spec())?;
    let mut inputs = Vec::new();
    let data = match &a.data {
        Some(p) => read_dataset(p, &mut inputs)?,
        None => generator(&a.scenario)?.dataset(a.m, sop_core::rng::child_seed(a.scenario.data_seed, 1)),
    };
    let est = core(audit::estimate_rademacher(&data, &spec, a.lambda_ball, a.n_sigma, a.restarts, a.ascent_iters, a.seed, None))?;
    let verdict = core(audit::rademacher_verdict(est, &data, &spec, a.delta))?;
    let mut table = Table::new(&["sigma_draw", "sup_value"]);
    for (k, v) in verdict.estimate.per_sigma.iter().enumerate() {
        table.push(vec![k.to_string(), num(*v)]);
    }
    let summary = json!({
        "m": data.len(),
        "lower_estimate": verdict.estimate.estimate,
        "bound": verdict.bound,
        "constants": verdict.constants,
        "estimator": "lower estimate: projected subgradient ascent on a nonconcave objective",
    });
    Ok(Outcome::new(a, &summary)?
        .inputs(inputs)
        .provenance(&[("lower_estimate", MEASURED), ("bound", EXACT), ("constants", MEASURED)])
        .verdict(verdict.pass)
        .table(table))
}

fn source(s: &SourceArgs, inputs: &mut Vec<InputRecord>) -> Result<MarkovSource, CliError> {
    match &s.source {
        Some(p) => {
            let bytes = read_input(p, "source", inputs)?;
            serde_json::from_slice(&bytes).map_err(|e| invalid(format!("{}: {e}", p.display())))
        }
        None => core(MarkovSource::two_state_lazy(s.eps)),
    }
}

pub fn mixing_gen(a: &MixingGenArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let src = source(&a.source, &mut inputs)?;
    generator(&a.scenario)?;
    let emitters = core(Emitters::new(&a.scenario.generator_config(), src.n_states()))?;
    let docs = core(mixing::gen_documents(&src, &emitters, a.m, a.j, a.seed))?;
    let mut bytes = Vec::new();
    docs.write_jsonl(&mut bytes).map_err(|e| CliError::Io(e.to_string()))?;
    write_bytes(&a.data_out, &bytes)?;
    let freqs = mixing::state_frequencies(&docs.states, docs.n_states);
    let result = json!({
        "documents": docs.m(),
        "J": docs.j(),
        "n_states": docs.n_states,
        "stationary": src.stationary(),
        "state_frequencies": freqs,
        "dataset_sha256_blob": crate::output::blob_hash(&bytes),
    });
    Ok(Outcome::new(a, &result)?.inputs(inputs).provenance(&[("state_frequencies", MEASURED), ("stationary", EXACT)]))
}

pub fn mixing_profile(a: &MixingProfileArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let src = source(&a.source, &mut inputs)?;
    let profile = core(MixingProfile::for_document_length(&src, a.j))?;
    let mut estimated = Vec::new();
    if a.paths > 0 {
        let paths: Vec<Vec<usize>> = (0..a.paths)
            .map(|i| src.sample_path(a.j, &mut sop_core::rng::stream(a.seed, i as u64)))
            .collect();
        for &blk in &profile.a_values {
            estimated.push(mixing::estimate_beta(&paths, src.n_states(), blk).ok());
        }
    }
    let mut table = Table::new(&["a", "beta_exact", "beta_dobrushin", "beta_estimated"]);
    for (i, blk) in profile.a_values.iter().enumerate() {
        let est = estimated.get(i).copied().flatten().map(num).unwrap_or_default();
        table.push(vec![blk.to_string(), num(profile.beta_exact[i]), num(profile.beta_dobrushin[i]), est]);
    }
    let pass = profile.beta_exact.iter().zip(&profile.beta_dobrushin).all(|(b, d)| *b <= d + 1e-12);
    let result = json!({
        "profile": profile,
        "beta_estimated": estimated,
        "dobrushin_dominates": pass,
    });
    Ok(Outcome::new(a, &result)?
        .inputs(inputs)
        .provenance(&[("profile", EXACT), ("beta_estimated", MEASURED)])
        .verdict(pass)
        .table(table))
}

fn mixing_constants(
    docs: &DocumentDataset,
    spec: &sop_core::MarginSpec,
    lambda_ball: f64,
    delta: f64,
) -> Result<ProblemConstants, CliError> {
    let pooled = docs.pooled();
    let g = pooled.graph();
    Ok(ProblemConstants {
        m: pooled.len(),
        d: g.d(),
        f_count: g.num_factors(),
        psi_star: core(compute_psi_star(&pooled.examples, &pooled.map, 2.0))?,
        lambda_ball,
        rho: spec.rho,
        q: 2.0,
        max_loss: max_loss(spec, g),
        kappa: core(compute_kappa(&pooled.examples, &pooled.map, DEFAULT_ENUMERATION_CAP))?.value,
        delta,
        lambda: None,
        w_star_norm: None,
        eta: None,
        iterations: None,
        empirical_risk: None,
    })
}

fn sweep_table(t: &mixing::SweepTable) -> Table {
    let mut table = Table::new(&["a", "beta", "feasible", "value", "complexity", "confidence", "effective_delta", "value_as_printed"]);
    for r in &t.rows {
        let row = match r.outcome {
            sop_core::bounds::MixingOutcome::Feasible(m) => vec![
                r.a.to_string(),
                num(r.beta),
                "true".into(),
                num(m.value),
                num(m.complexity),
                num(m.confidence),
                num(m.effective_delta),
                num(m.value_as_printed),
            ],
            sop_core::bounds::MixingOutcome::Infeasible { .. } => {
                vec![r.a.to_string(), num(r.beta), "false".into(), String::new(), String::new(), String::new(), String::new(), String::new()]
            }
        };
        table.push(row);
    }
    table
}

pub fn mixing_sweep(a: &MixingSweepArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let src = source(&a.source, &mut inputs)?;
    let spec = core(a.loss.spec())?;
    generator(&a.scenario)?;
    let emitters = core(Emitters::new(&a.scenario.generator_config(), src.n_states()))?;
    let docs = core(mixing::gen_documents(&src, &emitters, a.m, a.j, a.seed))?;
    let pc = mixing_constants(&docs, &spec, a.lambda_ball, a.delta)?;
    let profile = core(MixingProfile::for_document_length(&src, a.j))?;
    let table = core(mixing::sweep_feasible_a(a.m, a.j, a.delta, a.empirical_risk, &profile, &pc))?;
    let result = json!({
        "constants": pc,
        "sweep": table,
        "feasible_a": table.rows.iter().filter(|r| r.outcome.is_feasible()).map(|r| r.a).collect::<Vec<_>>(),
    });
    Ok(Outcome::new(a, &result)?
        .inputs(inputs)
        .provenance(&[("constants", MEASURED), ("sweep", SHAPE)])
        .table(sweep_table(&table)))
}

pub fn mixing_gap(a: &MixingGapArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let src = source(&a.source, &mut inputs)?;
    let spec = core(a.loss.spec())?;
    generator(&a.scenario)?;
    let emitters = core(Emitters::new(&a.scenario.generator_config(), src.n_states()))?;
    let train_docs = core(mixing::gen_documents(&src, &emitters, a.m, a.j, sop_core::rng::child_seed(a.seed, 0)))?;
    let test_docs = core(mixing::gen_documents(&src, &emitters, a.m_test, a.j, sop_core::rng::child_seed(a.seed, 1)))?;
    let cfg = SgdConfig { eta: a.eta, iterations: a.iterations, seed: sop_core::rng::child_seed(a.seed, 2), record_trajectory: false };
    core(cfg.validate())?;
    let fit = core(train::sgd(&train_docs.pooled(), &spec, &cfg))?;
    let w = fit.averaged_w;
    let train_risk = core(mixing::document_risk(&w, &train_docs, &spec))?;
    let test_risk = core(mixing::document_risk(&w, &test_docs, &spec))?;
    let mut pc = mixing_constants(&train_docs, &spec, a.lambda_ball, a.delta)?;
    pc.lambda_ball = a.lambda_ball.max(l2_norm(&w));
    let profile = core(MixingProfile::for_document_length(&src, a.j))?;
    let table = core(mixing::sweep_feasible_a(a.m, a.j, a.delta, train_risk, &profile, &pc))?;
    let best = table.best_a.and_then(|b| table.rows.iter().find(|r| r.a == b)).and_then(|r| r.outcome.value());
    let held = best.map(|v| test_risk <= v);
    let result = json!({
        "train_risk": train_risk,
        "test_risk": test_risk,
        "gap": test_risk - train_risk,
        "best_a": table.best_a,
        "best_bound": best,
        "held": held,
        "constants": pc,
        "sweep": table,
    });
    let mut out = Outcome::new(a, &result)?
        .inputs(inputs)
        .provenance(&[
            ("train_risk", MEASURED),
            ("test_risk", MEASURED),
            ("gap", MEASURED),
            ("best_bound", SHAPE),
            ("constants", MEASURED),
        ])
        .table(sweep_table(&table));
    if let Some(h) = held {
        out = out.verdict(h);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ReportEntry {
    file: String,
    sha256_blob: String,
    command: Option<String>,
    verdict: Option<String>,
}

pub fn report(a: &ReportArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let mut entries = Vec::new();
    for p in &a.inputs {
        let bytes = read_input(p, "report", &mut inputs)?;
        let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        entries.push(ReportEntry {
            file: p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256_blob: inputs.last().expect("just pushed").sha256_blob.clone(),
            command: v.get("command").and_then(|c| c.as_str()).map(str::to_string),
            verdict: v.get("verdict").and_then(|c| c.as_str()).map(str::to_string),
        });
    }
    let failed = entries.iter().filter(|e| e.verdict.as_deref() == Some("FAIL")).count();
    let checked = entries.iter().filter(|e| e.verdict.is_some()).count();
    let mut table = Table::new(&["file", "command", "verdict"]);
    for e in &entries {
        table.push(vec![e.file.clone(), e.command.clone().unwrap_or_default(), e.verdict.clone().unwrap_or_default()]);
    }
    let result = json!({ "reports": entries, "checked": checked, "failed": failed });
    Ok(Outcome::new(a, &result)?.inputs(inputs).verdict(failed == 0).table(table))
}
