//! Closed-form evaluators for the generalization and stability bounds.
//!
//! All logarithms are natural. Where a bound is only stated up to an
//! unspecified constant the expression is evaluated with the constant set to
//! one (or inherited from the matching explicit bound) and the value is
//! tagged [`Provenance::ShapeOnly`].

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};
use crate::train::{lambda_choice, sgd_schedule};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The symbol set shared by the bound evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub m: usize,
    pub d: usize,
    #[serde(rename = "F")]
    pub f_count: usize,
    pub psi_star: f64,
    #[serde(rename = "Lambda")]
    pub lambda_ball: f64,
    pub rho: f64,
    pub q: f64,
    #[serde(rename = "M")]
    pub max_loss: f64,
    pub kappa: f64,
    pub delta: f64,
    /// Regularization strength for the RRM bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_risk: Option<f64>,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid_param(name, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid_param(name, format!("must be nonnegative and finite, got {v}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid_param("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(invalid_param("m", "need m ≥ 2 so that log m > 0"));
        }
        if self.d == 0 || self.f_count == 0 {
            return Err(invalid_param("d/F", "must be at least 1"));
        }
        positive("psi_star", self.psi_star)?;
        nonnegative("Lambda", self.lambda_ball)?;
        positive("rho", self.rho)?;
        if !(self.q > 1.0 && self.q.is_finite()) {
            return Err(invalid_param("q", format!("must be finite and > 1, got {}", self.q)));
        }
        positive("M", self.max_loss)?;
        nonnegative("kappa", self.kappa)?;
        check_delta(self.delta)?;
        if let Some(l) = self.lambda {
            positive("lambda", l)?;
        }
        if let Some(w) = self.w_star_norm {
            positive("w_star_norm", w)?;
        }
        if let Some(e) = self.eta {
            positive("eta", e)?;
        }
        if self.iterations == Some(0) {
            return Err(invalid_param("T", "must be positive"));
        }
        if let Some(r) = self.empirical_risk {
            nonnegative("empirical_risk", r)?;
        }
        Ok(())
    }

    /// The constants with a different sample count.
    pub fn with_m(&self, m: usize) -> Self {
        ProblemConstants { m, ..*self }
    }
}

/// `L̃ = √(log(2 n d |F| [8 Ψ* Λ n |F| / ρ + 3] + 1)) · log n`.
pub fn l_tilde(n: usize, d: usize, f_count: usize, psi_star: f64, lambda_ball: f64, rho: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid_param("m", "need m ≥ 2 so that log m > 0"));
    }
    let (n, d, f) = (n as f64, d as f64, f_count as f64);
    let inner = 2.0 * n * d * f * (8.0 * psi_star * lambda_ball * n * f / rho + 3.0) + 1.0;
    Ok(inner.ln().sqrt() * n.ln())
}

fn l_tilde_pc(pc: &ProblemConstants, n: usize) -> Result<f64> {
    l_tilde(n, pc.d, pc.f_count, pc.psi_star, pc.lambda_ball, pc.rho)
}

/// `√(q−1) Ψ* Λ |F| / (ρ √n) · L̃(n)`, the shared complexity core.
fn complexity_core(pc: &ProblemConstants, n: usize) -> Result<f64> {
    Ok((pc.q - 1.0).sqrt() * pc.psi_star * pc.lambda_ball * pc.f_count as f64
        / (pc.rho * (n as f64).sqrt())
        * l_tilde_pc(pc, n)?)
}

/// Empirical Rademacher complexity bound `4/m + 144 √(q−1) Ψ* Λ |F| / (ρ√m) · L̃`.
pub fn rademacher_bound(pc: &ProblemConstants) -> Result<f64> {
    pc.validate()?;
    Ok(4.0 / pc.m as f64 + 144.0 * complexity_core(pc, pc.m)?)
}

/// `8/m + 288 √(q−1) Ψ* Λ |F| / (ρ√m) · L̃`.
pub fn generalization_complexity_term(pc: &ProblemConstants) -> Result<f64> {
    pc.validate()?;
    Ok(8.0 / pc.m as f64 + 288.0 * complexity_core(pc, pc.m)?)
}

/// `M √(log(1/δ) / (2m))`.
pub fn confidence_term(pc: &ProblemConstants) -> Result<f64> {
    pc.validate()?;
    Ok(pc.max_loss * ((1.0 / pc.delta).ln() / (2.0 * pc.m as f64)).sqrt())
}

/// High-probability bound on `R(h)` given `R_S(h)`.
pub fn generalization_bound_hp(pc: &ProblemConstants, empirical_risk: f64) -> Result<f64> {
    nonnegative("empirical_risk", empirical_risk)?;
    Ok(empirical_risk + generalization_complexity_term(pc)? + confidence_term(pc)?)
}

/// Earlier `Λ Ψ* |F| √d / (ρ √m)` bound with unit constant (shape only, `q = 2`).
pub fn prior_sqrt_d_bound(pc: &ProblemConstants) -> Result<f64> {
    pc.validate()?;
    if pc.q != 2.0 {
        return Err(invalid_param("q", "the √d baseline is stated for q = 2"));
    }
    Ok(pc.lambda_ball * pc.psi_star * pc.f_count as f64 * (pc.d as f64).sqrt()
        / (pc.rho * (pc.m as f64).sqrt()))
}

/// Uniform stability of RRM, `16κ² / (m ρ² λ)`.
pub fn rrm_stability_bound(m: usize, rho: f64, lambda: f64, kappa: f64) -> Result<f64> {
    if m == 0 {
        return Err(invalid_param("m", "must be positive"));
    }
    positive("rho", rho)?;
    positive("lambda", lambda)?;
    nonnegative("kappa", kappa)?;
    Ok(16.0 * kappa * kappa / (m as f64 * rho * rho * lambda))
}

/// Expected regularized excess risk of RRM; same value as the stability bound.
pub fn rrm_regularized_excess_bound(m: usize, rho: f64, lambda: f64, kappa: f64) -> Result<f64> {
    rrm_stability_bound(m, rho, lambda, kappa)
}

/// `4√2 κ ‖w*‖ / (√m ρ)`, valid at the matching choice of λ.
pub fn rrm_excess_bound(m: usize, rho: f64, kappa: f64, w_star_norm: f64) -> Result<f64> {
    if m == 0 {
        return Err(invalid_param("m", "must be positive"));
    }
    positive("rho", rho)?;
    nonnegative("kappa", kappa)?;
    positive("w_star_norm", w_star_norm)?;
    Ok(4.0 * 2f64.sqrt() * kappa * w_star_norm / ((m as f64).sqrt() * rho))
}

/// `16 e (1 + t/m²) κ² ρ⁻² Σ_{j≤t} η_j²`, bounding `E‖w^{(t+1)} − ŵ^{(t+1)}‖²`.
pub fn sgd_stability_bound(t: usize, m: usize, kappa: f64, rho: f64, etas: &[f64]) -> Result<f64> {
    if t > etas.len() {
        return Err(invalid_param("t", format!("{t} exceeds the {} step sizes given", etas.len())));
    }
    if m == 0 {
        return Err(invalid_param("m", "must be positive"));
    }
    positive("rho", rho)?;
    nonnegative("kappa", kappa)?;
    let sum_sq: f64 = etas[..t].iter().map(|e| e * e).sum();
    let m = m as f64;
    Ok(16.0 * E * (1.0 + t as f64 / (m * m)) * kappa * kappa / (rho * rho) * sum_sq)
}

/// Constant-step version of [`sgd_stability_bound`].
pub fn sgd_stability_bound_constant(t: usize, m: usize, kappa: f64, rho: f64, eta: f64) -> Result<f64> {
    if m == 0 {
        return Err(invalid_param("m", "must be positive"));
    }
    positive("rho", rho)?;
    nonnegative("kappa", kappa)?;
    nonnegative("eta", eta)?;
    let m = m as f64;
    let t = t as f64;
    Ok(16.0 * E * (1.0 + t / (m * m)) * kappa * kappa / (rho * rho) * eta * eta * t)
}

/// `(√T + T/m) κ² η + (1 + T κ² η²) / (T η)` with unit constant (shape only).
pub fn sgd_excess_bound(iterations: usize, m: usize, kappa: f64, eta: f64) -> Result<f64> {
    if iterations == 0 || m == 0 {
        return Err(invalid_param("T/m", "must be positive"));
    }
    positive("kappa", kappa)?;
    positive("eta", eta)?;
    let t = iterations as f64;
    let k2 = kappa * kappa;
    Ok((t.sqrt() + t / m as f64) * k2 * eta + (1.0 + t * k2 * eta * eta) / (t * eta))
}

/// Evaluated weak-dependence bound for document data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MixingOutcome {
    /// `δ ≤ 2m(J/(2a) − 1)β(a)`: the bound says nothing at this `a`.
    Infeasible { constraint: f64 },
    Feasible(MixingTerms),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingTerms {
    /// `R_S + complexity + confidence`.
    pub value: f64,
    pub complexity: f64,
    pub confidence: f64,
    /// `δ − 2m(J/(2a) − 1)β(a)`.
    pub effective_delta: f64,
    /// The expression exactly as printed, with complexity constant 288.
    pub value_as_printed: f64,
    pub complexity_as_printed: f64,
    pub confidence_as_printed: f64,
}

impl MixingOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            MixingOutcome::Feasible(t) => Some(t.value),
            MixingOutcome::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, MixingOutcome::Feasible(_))
    }
}

/// Generalization bound for `m_docs` independent documents of `J` β-mixing
/// elements, at block length `a` with `2a | J`.
///
/// `value` is normalized so that it is the i.i.d. high-probability bound at
/// `mJ/a` effective samples (with `L̃` kept at `mJ` and `δ` replaced by the
/// effective `δ`); at `a = 1, β = 0` it coincides with that bound at `mJ`
/// samples. The printed form `288 √(2a(q−1)) … L̃ + M√a √(log(2/δ′))/√(mJ)` is
/// reported alongside. Both are shape-only.
pub fn mixing_bound(
    m_docs: usize,
    j: usize,
    a: usize,
    beta_a: f64,
    delta: f64,
    empirical_risk: f64,
    pc: &ProblemConstants,
) -> Result<MixingOutcome> {
    if a == 0 {
        return Err(invalid_param("a", "must be a positive integer"));
    }
    if j == 0 || !j.is_multiple_of(2 * a) {
        return Err(invalid_param("J", format!("J = {j} is not a multiple of 2a = {}", 2 * a)));
    }
    if m_docs == 0 {
        return Err(invalid_param("m", "need at least one document"));
    }
    if !(0.0..=1.0).contains(&beta_a) {
        return Err(invalid_param("beta", format!("β(a) must lie in [0, 1], got {beta_a}")));
    }
    check_delta(delta)?;
    nonnegative("empirical_risk", empirical_risk)?;
    let n = m_docs * j;
    let pc = ProblemConstants { delta, ..pc.with_m(n) };
    pc.validate()?;
    let constraint = 2.0 * m_docs as f64 * ((j / (2 * a)) as f64 - 1.0) * beta_a;
    if delta <= constraint {
        return Ok(MixingOutcome::Infeasible { constraint });
    }
    let eff = delta - constraint;
    let af = a as f64;
    let nf = n as f64;
    let core = complexity_core(&pc, n)?;
    let complexity = 8.0 * af / nf + 288.0 * af.sqrt() * core;
    let confidence = pc.max_loss * (af * (1.0 / eff).ln() / (2.0 * nf)).sqrt();
    let complexity_as_printed = 288.0 * (2.0 * af).sqrt() * core;
    let confidence_as_printed = pc.max_loss * af.sqrt() * (2.0 / eff).ln().sqrt() / nf.sqrt();
    Ok(MixingOutcome::Feasible(MixingTerms {
        value: empirical_risk + complexity + confidence,
        complexity,
        confidence,
        effective_delta: eff,
        value_as_printed: empirical_risk + complexity_as_printed + confidence_as_printed,
        complexity_as_printed,
        confidence_as_printed,
    }))
}

/// Where a reported number comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "measured")]
    Measured,
    #[serde(rename = "exact-constant formula")]
    ExactConstant,
    #[serde(rename = "shape-only")]
    ShapeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub provenance: Provenance,
    /// A risk-type bound above `M` carries no information.
    pub vacuous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub inputs: ProblemConstants,
    pub values: BTreeMap<String, BoundValue>,
}

impl BoundReport {
    /// Every bound whose inputs are present in `pc`.
    pub fn evaluate(pc: &ProblemConstants) -> Result<Self> {
        pc.validate()?;
        let mut values = BTreeMap::new();
        let big_m = pc.max_loss;
        let mut put = |name: &str, value: f64, provenance: Provenance, risk_type: bool, note: Option<&str>| {
            values.insert(
                name.to_string(),
                BoundValue {
                    value,
                    provenance,
                    vacuous: risk_type && value > big_m,
                    note: note.map(str::to_string),
                },
            );
        };
        use Provenance::{ExactConstant, ShapeOnly};
        put("l_tilde", l_tilde_pc(pc, pc.m)?, ExactConstant, false, None);
        put("rademacher_bound", rademacher_bound(pc)?, ExactConstant, true, None);
        put(
            "generalization_complexity_term",
            generalization_complexity_term(pc)?,
            ExactConstant,
            false,
            None,
        );
        put("confidence_term", confidence_term(pc)?, ExactConstant, false, None);
        let risk = pc.empirical_risk.unwrap_or(0.0);
        put(
            "generalization_bound_hp",
            generalization_bound_hp(pc, risk)?,
            ExactConstant,
            true,
            pc.empirical_risk.is_none().then_some("empirical risk not supplied; evaluated at R_S = 0"),
        );
        if pc.q == 2.0 {
            put(
                "prior_sqrt_d_bound",
                prior_sqrt_d_bound(pc)?,
                ShapeOnly,
                true,
                Some("earlier √d bound, constant hidden in O(·) set to 1"),
            );
        }
        if let Some(lambda) = pc.lambda {
            put("rrm_stability_bound", rrm_stability_bound(pc.m, pc.rho, lambda, pc.kappa)?, ExactConstant, true, None);
            put(
                "rrm_regularized_excess_bound",
                rrm_regularized_excess_bound(pc.m, pc.rho, lambda, pc.kappa)?,
                ExactConstant,
                true,
                None,
            );
        }
        if let Some(w) = pc.w_star_norm {
            put("rrm_excess_bound", rrm_excess_bound(pc.m, pc.rho, pc.kappa, w)?, ExactConstant, true, Some("valid at lambda = lambda_choice"));
            if pc.kappa > 0.0 {
                put("lambda_choice", lambda_choice(pc.m, pc.rho, pc.kappa, w)?, ExactConstant, false, None);
            }
        }
        if let (Some(eta), Some(t)) = (pc.eta, pc.iterations) {
            put(
                "sgd_stability_bound",
                sgd_stability_bound_constant(t, pc.m, pc.kappa, pc.rho, eta)?,
                ExactConstant,
                false,
                Some("bound on the squared iterate distance after T steps"),
            );
            if pc.kappa > 0.0 {
                put(
                    "sgd_excess_bound",
                    sgd_excess_bound(t, pc.m, pc.kappa, eta)?,
                    ShapeOnly,
                    true,
                    Some("constant hidden in O(·) set to 1"),
                );
            }
        }
        if pc.kappa > 0.0 {
            let (t, eta) = sgd_schedule(pc.m, pc.kappa, 1.0)?;
            put("sgd_schedule_T", t as f64, ShapeOnly, false, Some("T = m², hidden constant 1"));
            put("sgd_schedule_eta", eta, ShapeOnly, false, Some("eta = T^(-3/4)/kappa, hidden constant 1"));
            put(
                "sgd_excess_bound_at_schedule",
                sgd_excess_bound(t, pc.m, pc.kappa, eta)?,
                ShapeOnly,
                true,
                Some("constant hidden in O(·) set to 1"),
            );
        }
        Ok(BoundReport {
            schema_version: REPORT_SCHEMA_VERSION,
            inputs: *pc,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn pc() -> ProblemConstants {
        ProblemConstants {
            m: 100,
            d: 4,
            f_count: 1,
            psi_star: 1.0,
            lambda_ball: 1.0,
            rho: 1.0,
            q: 2.0,
            max_loss: 1.0,
            kappa: 1.0,
            delta: 0.05,
            lambda: None,
            w_star_norm: None,
            eta: None,
            iterations: None,
            empirical_risk: None,
        }
    }

    #[test]
    fn l_tilde_hand_value() {
        // m = 8, d = 4, |F| = 1, Ψ* = Λ = ρ = 1: inner = 64·(64+3) + 1 = 4289
        let v = l_tilde(8, 4, 1, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 4289f64.ln().sqrt() * 8f64.ln(), epsilon = 1e-14);
        assert!(l_tilde(8, 16, 1, 1.0, 1.0, 1.0).unwrap() > v);
        assert!(l_tilde(1, 4, 1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn l_tilde_doubling_d() {
        for m in [8usize, 50, 1000] {
            for d in [1usize, 4, 9, 100] {
                let a = l_tilde(m, d, 3, 1.3, 0.7, 0.5).unwrap();
                let b = l_tilde(m, 2 * d, 3, 1.3, 0.7, 0.5).unwrap();
                assert!(b > a);
                let lm = (m as f64).ln();
                assert!(b * b - a * a <= 2f64.ln() * lm * lm + 1e-9);
            }
        }
    }

    #[test]
    fn rademacher_examples() {
        let p = pc();
        let lt = l_tilde(100, 4, 1, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(rademacher_bound(&p).unwrap(), 0.04 + 14.4 * lt, epsilon = 1e-12);
        // linear in Λ up to L̃
        let p2 = ProblemConstants { lambda_ball: 2.0, ..p };
        let lt2 = l_tilde(100, 4, 1, 1.0, 2.0, 1.0).unwrap();
        let ratio = (rademacher_bound(&p2).unwrap() - 0.04) / (rademacher_bound(&p).unwrap() - 0.04);
        assert_relative_eq!(ratio, 2.0 * lt2 / lt, epsilon = 1e-12);
        for m in [8usize, 16, 64, 256] {
            assert!(rademacher_bound(&p.with_m(4 * m)).unwrap() < rademacher_bound(&p.with_m(m)).unwrap());
        }
    }

    #[test]
    fn generalization_identities() {
        let p = pc();
        let r1 = rademacher_bound(&p).unwrap();
        assert_relative_eq!(
            generalization_complexity_term(&p).unwrap(),
            2.0 * (r1 - 4.0 / 100.0) + 8.0 / 100.0,
            epsilon = 1e-12
        );
        let g0 = generalization_bound_hp(&p, 0.0).unwrap();
        assert_relative_eq!(g0, generalization_complexity_term(&p).unwrap() + confidence_term(&p).unwrap());
        let near_one = ProblemConstants { delta: 0.999999, ..p };
        assert!(confidence_term(&near_one).unwrap() < 1e-3);
        assert!(generalization_bound_hp(&ProblemConstants { delta: 1.0, ..p }, 0.0).is_err());
        assert_relative_eq!(generalization_bound_hp(&p, 0.25).unwrap(), g0 + 0.25, epsilon = 1e-12);
    }

    #[test]
    fn prior_baseline() {
        let p = ProblemConstants { d: 1, ..pc() };
        assert_relative_eq!(prior_sqrt_d_bound(&p).unwrap(), 0.1, epsilon = 1e-15);
        // d = c² gives linear growth in c
        let at = |c: usize| prior_sqrt_d_bound(&ProblemConstants { d: c * c, ..pc() }).unwrap();
        assert_relative_eq!(at(8) / at(4), 2.0, epsilon = 1e-12);
        let mut last = 0.0;
        for d in [4usize, 64, 1024, 1 << 16, 1 << 24] {
            let p = ProblemConstants { d, ..pc() };
            let r = prior_sqrt_d_bound(&p).unwrap() / rademacher_bound(&p).unwrap();
            assert!(r > last);
            last = r;
        }
        assert!(prior_sqrt_d_bound(&ProblemConstants { q: 3.0, ..pc() }).is_err());
    }

    #[test]
    fn stability_and_excess_examples() {
        assert_relative_eq!(rrm_stability_bound(16, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(rrm_stability_bound(16, 1.0, 2.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(rrm_stability_bound(16, 2.0, 1.0, 1.0).unwrap(), 0.25);
        assert_eq!(rrm_regularized_excess_bound(16, 2.0, 1.0, 1.0).unwrap(), 0.25);
        assert_relative_eq!(rrm_excess_bound(32, 1.0, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(rrm_excess_bound(128, 1.0, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(rrm_excess_bound(32, 1.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn sgd_bounds() {
        assert_eq!(sgd_stability_bound(0, 10, 1.0, 1.0, &[]).unwrap(), 0.0);
        let etas = vec![0.01; 400];
        for t in [1usize, 100, 400] {
            let closed = 16.0 * E * (1.0 + t as f64 / 100.0) * 4.0 * 0.0001 * t as f64 / 0.25;
            assert_relative_eq!(sgd_stability_bound(t, 10, 2.0, 0.5, &etas).unwrap(), closed, epsilon = 1e-12);
            assert_relative_eq!(sgd_stability_bound_constant(t, 10, 2.0, 0.5, 0.01).unwrap(), closed, max_relative = 1e-12);
        }
        let doubled = vec![0.02; 400];
        assert_relative_eq!(
            sgd_stability_bound(50, 10, 1.0, 1.0, &doubled).unwrap(),
            4.0 * sgd_stability_bound(50, 10, 1.0, 1.0, &etas).unwrap(),
            epsilon = 1e-12
        );
        assert!(sgd_stability_bound(401, 10, 1.0, 1.0, &etas).is_err());

        assert_relative_eq!(sgd_excess_bound(16, 4, 1.0, 0.125).unwrap(), 1.625, epsilon = 1e-14);
        assert!(sgd_excess_bound(100, 10, 1.0, 1e-9).unwrap() > 1e6);
        for m in [100usize, 1000, 10_000, 100_000, 1_000_000] {
            let (t, eta) = sgd_schedule(m, 1.7, 1.0).unwrap();
            let v = sgd_excess_bound(t, m, 1.7, eta).unwrap() * (m as f64).sqrt() / 1.7;
            assert!((0.1..=100.0).contains(&v), "m = {m}: {v}");
        }
    }

    #[test]
    fn mixing_reduces_to_iid_bound() {
        let p = ProblemConstants { q: 2.5, max_loss: 3.0, ..pc() };
        for (m, j) in [(20usize, 64usize), (5, 2), (100, 10)] {
            let out = mixing_bound(m, j, 1, 0.0, 0.05, 0.1, &p).unwrap();
            let reference = generalization_bound_hp(&ProblemConstants { delta: 0.05, ..p.with_m(m * j) }, 0.1).unwrap();
            assert!((out.value().unwrap() - reference).abs() <= 1e-12 * reference);
        }
    }

    #[test]
    fn mixing_feasibility() {
        let p = pc();
        // a = J/2 removes the constraint whatever β is
        assert!(mixing_bound(20, 64, 32, 1.0, 0.05, 0.0, &p).unwrap().is_feasible());
        assert!(!mixing_bound(20, 64, 1, 1.0, 0.05, 0.0, &p).unwrap().is_feasible());
        // boundary: δ equal to the constraint is infeasible
        let beta = 0.05 / (2.0 * 20.0 * (32.0 - 1.0));
        let constraint = 2.0 * 20.0 * 31.0 * beta;
        let out = mixing_bound(20, 64, 1, beta, constraint, 0.0, &p).unwrap();
        assert!(!out.is_feasible());
        assert!(mixing_bound(20, 64, 3, 0.0, 0.05, 0.0, &p).is_err());
        // printed form at a = J/2 has the structure of the i.i.d. bound at m samples
        if let MixingOutcome::Feasible(t) = mixing_bound(20, 64, 32, 0.9, 0.05, 0.0, &p).unwrap() {
            let core = (p.q - 1.0).sqrt() / (20f64).sqrt() * l_tilde(20 * 64, 4, 1, 1.0, 1.0, 1.0).unwrap();
            assert_relative_eq!(t.complexity_as_printed, 288.0 * core, epsilon = 1e-12);
            assert_relative_eq!(t.confidence_as_printed, ((2.0f64 / 0.05).ln() / 40.0).sqrt(), epsilon = 1e-12);
        } else {
            panic!("a = J/2 must be feasible");
        }
    }

    #[test]
    fn monotonicity_grid() {
        let ms = [16usize, 64, 256, 1024];
        let ds = [2usize, 4, 16, 64];
        let lambdas = [0.5, 1.0, 2.0, 4.0];
        let psis = [0.5, 1.0, 2f64.sqrt(), 2.0];
        let fs = [1usize, 3, 7, 15];
        let rhos = [0.25, 0.5, 1.0, 2.0];
        let eval = |i: [usize; 6]| {
            let p = ProblemConstants {
                m: ms[i[0]],
                d: ds[i[1]],
                lambda_ball: lambdas[i[2]],
                psi_star: psis[i[3]],
                f_count: fs[i[4]],
                rho: rhos[i[5]],
                ..pc()
            };
            (rademacher_bound(&p).unwrap(), generalization_bound_hp(&p, 0.0).unwrap())
        };
        let mut checked = 0;
        for flat in 0..4usize.pow(6) {
            let idx: [usize; 6] = std::array::from_fn(|k| flat / 4usize.pow(k as u32) % 4);
            let here = eval(idx);
            for axis in 0..6 {
                if idx[axis] == 3 {
                    continue;
                }
                let mut next = idx;
                next[axis] += 1;
                let there = eval(next);
                let (a, b) = (here.0, there.0);
                let (c, e) = (here.1, there.1);
                match axis {
                    0 | 5 => assert!(b <= a && e <= c, "axis {axis} at {idx:?}"),
                    _ => assert!(b >= a && e >= c, "axis {axis} at {idx:?}"),
                }
                checked += 1;
            }
        }
        assert_eq!(checked, 6 * 3 * 4usize.pow(5));
        // M enters only the confidence term
        let p = pc();
        assert!(
            generalization_bound_hp(&ProblemConstants { max_loss: 2.0, ..p }, 0.0).unwrap()
                > generalization_bound_hp(&p, 0.0).unwrap()
        );
    }

    #[test]
    fn report_contents() {
        let p = ProblemConstants {
            lambda: Some(0.1),
            w_star_norm: Some(2.0),
            eta: Some(0.01),
            iterations: Some(400),
            ..pc()
        };
        let r = BoundReport::evaluate(&p).unwrap();
        for key in [
            "l_tilde",
            "rademacher_bound",
            "generalization_bound_hp",
            "prior_sqrt_d_bound",
            "rrm_stability_bound",
            "rrm_excess_bound",
            "lambda_choice",
            "sgd_stability_bound",
            "sgd_excess_bound",
            "sgd_excess_bound_at_schedule",
        ] {
            let v = &r.values[key];
            assert!(v.value.is_finite() && v.value >= 0.0, "{key}");
        }
        assert_eq!(r.values["sgd_excess_bound"].provenance, Provenance::ShapeOnly);
        assert_eq!(r.values["rademacher_bound"].provenance, Provenance::ExactConstant);
        assert!(r.values["generalization_bound_hp"].vacuous);
        let text = crate::json::to_line(&r).unwrap();
        assert!(text.contains("\"provenance\":\"exact-constant formula\""));
        assert!(text.contains("\"Lambda\":1.0000000000000000e0"));
        let back: BoundReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
