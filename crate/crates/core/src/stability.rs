//! Equilibria of the (y1, y2) subsystem and sufficient conditions for local
//! asymptotic stability of the nontrivial equilibrium.
//!
//! Linearizing around `E1 = (y1*, y2*)` gives the characteristic function
//!
//! ```text
//! Δ(λ) = λ² + (β+γ+δ - α y1* e^{-τ1 λ} + α y2*) λ + (α y2* + δ)(β+γ - ε e^{-τ2 λ})
//! ```
//!
//! With `A = β+γ-ε` and `B = αζ + δA` the sufficient conditions are
//!
//! ```text
//! A > 0  and  B / (αζ(β+γ)) > τ1/2  and  one of
//!   B > 0  and  (1/ε)(δ(β+γ)A²/B² + 1) > τ2     (positive branch)
//!   B < 0  and  (1/ε)(δ(β+γ)A²/B² + 1) < τ2     (negative branch)
//! ```
//!
//! `Δ` is real on the real axis with `Δ(0) = B` and `Δ(λ) → +∞` as `λ → +∞`,
//! so `B < 0` always yields a positive real root. The negative branch
//! therefore never certifies stability; it is reported but the verdict for
//! `B < 0` is [`Verdict::Unstable`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dde::{integrate, HistorySpec};
use crate::error::{Error, Result};
use crate::model::{BoomParams, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Trivial,
    NonTrivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub y1_star: f64,
    pub y2_star: f64,
    pub kind: EquilibriumKind,
}

impl EquilibriumPoint {
    pub fn norm(&self) -> f64 {
        self.y1_star.hypot(self.y2_star)
    }
}

/// Equilibria of the first two model lines.
pub fn equilibria(params: &BoomParams) -> Result<Vec<EquilibriumPoint>> {
    let p = params.validated()?;
    if p.zeta == 0.0 {
        return Ok(vec![EquilibriumPoint {
            y1_star: 0.0,
            y2_star: 0.0,
            kind: EquilibriumKind::Trivial,
        }]);
    }
    Ok(vec![nontrivial(&p)?])
}

/// Closed-form `E1`; requires `ζ != 0`, `A != 0`, `B != 0`.
pub fn nontrivial(p: &BoomParams) -> Result<EquilibriumPoint> {
    if p.zeta == 0.0 {
        return Err(Error::DegenerateEquilibrium(
            "zeta = 0 has only the trivial equilibrium".into(),
        ));
    }
    let a = p.outflow() - p.epsilon;
    if a == 0.0 {
        return Err(Error::DegenerateEquilibrium("beta + gamma - epsilon = 0".into()));
    }
    let b = p.alpha * p.zeta + p.delta * a;
    if b == 0.0 {
        return Err(Error::DegenerateEquilibrium(
            "alpha*zeta + delta*(beta + gamma - epsilon) = 0".into(),
        ));
    }
    Ok(EquilibriumPoint {
        y1_star: p.outflow() * p.zeta / b,
        y2_star: p.zeta / a,
        kind: EquilibriumKind::NonTrivial,
    })
}

/// Left-hand side of the characteristic equation at `lambda`.
pub fn characteristic_residual(params: &BoomParams, eq: &EquilibriumPoint, lambda: Complex64) -> Complex64 {
    let p = params;
    let lag1 = (-p.tau1 * lambda).exp();
    let lag2 = (-p.tau2 * lambda).exp();
    let linear = p.outflow() + p.delta - p.alpha * eq.y1_star * lag1 + p.alpha * eq.y2_star;
    let constant = (p.alpha * eq.y2_star + p.delta) * (p.outflow() - p.epsilon * lag2);
    lambda * lambda + linear * lambda + constant
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The positive-branch conditions hold: every characteristic root has negative real part.
    SufficientStable,
    /// The sufficient conditions do not apply; nothing is concluded.
    Inconclusive,
    /// `B < 0`: the characteristic function has a positive real root.
    Unstable,
}

/// Per-condition outcomes. `None` marks a condition that cannot be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub a_positive: bool,
    pub tau1_bound_holds: bool,
    pub b_positive: bool,
    pub tau2_upper_holds: Option<bool>,
    pub b_negative: bool,
    pub tau2_lower_holds: Option<bool>,
}

/// Quantities the conditions are built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityQuantities {
    /// `β + γ - ε`
    pub a: f64,
    /// `αζ + δ(β + γ - ε)`
    pub b: f64,
    /// `B / (αζ(β+γ))`, compared against `τ1/2`.
    pub tau1_bound: f64,
    /// `(1/ε)(δ(β+γ)A²/B² + 1)`, compared against `τ2`; `None` when `ε = 0` or `B = 0`.
    pub tau2_bound: Option<f64>,
    /// `((β+γ)δA² + (1 - ετ2)B²) / (AB)`, the lower bound on the imaginary-part
    /// ratio that the sufficiency argument needs positive. `None` when `AB = 0`.
    pub consolidated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub conditions: ConditionReport,
    pub quantities: StabilityQuantities,
    /// Both common conditions and either branch, taken literally.
    pub literal_conditions_hold: bool,
    pub equilibrium: Option<EquilibriumPoint>,
}

impl StabilityVerdict {
    /// Condition labels and values in order, `None` when not evaluable.
    pub fn condition_table(&self) -> [(&'static str, Option<bool>); 6] {
        let c = &self.conditions;
        [
            ("A = beta+gamma-epsilon > 0", Some(c.a_positive)),
            ("B/(alpha*zeta*(beta+gamma)) > tau1/2", Some(c.tau1_bound_holds)),
            ("B = alpha*zeta+delta*A > 0", Some(c.b_positive)),
            ("(1/epsilon)(delta*(beta+gamma)*A^2/B^2+1) > tau2", c.tau2_upper_holds),
            ("B < 0", Some(c.b_negative)),
            ("(1/epsilon)(delta*(beta+gamma)*A^2/B^2+1) < tau2", c.tau2_lower_holds),
        ]
    }
}

/// Evaluates the sufficient stability conditions for `E1`.
pub fn check_stability(params: &BoomParams) -> Result<StabilityVerdict> {
    let p = params.validated()?;
    if p.zeta == 0.0 {
        return Err(Error::DegenerateEquilibrium(
            "stability conditions require zeta != 0".into(),
        ));
    }
    let s = p.outflow();
    let a = s - p.epsilon;
    let b = p.alpha * p.zeta + p.delta * a;
    let tau1_bound = b / (p.alpha * p.zeta * s);
    let finite = |x: f64| x.is_finite().then_some(x);
    let tau2_bound = (p.epsilon != 0.0)
        .then(|| (p.delta * s * a * a / (b * b) + 1.0) / p.epsilon)
        .and_then(finite);
    let consolidated = finite((s * p.delta * a * a + (1.0 - p.epsilon * p.tau2) * b * b) / (a * b));

    let conditions = ConditionReport {
        a_positive: a > 0.0,
        tau1_bound_holds: tau1_bound > p.tau1 / 2.0,
        b_positive: b > 0.0,
        tau2_upper_holds: tau2_bound.map(|bound| bound > p.tau2),
        b_negative: b < 0.0,
        tau2_lower_holds: tau2_bound.map(|bound| bound < p.tau2),
    };
    let c = &conditions;
    let base = c.a_positive && c.tau1_bound_holds;
    let positive_branch = c.b_positive && c.tau2_upper_holds == Some(true);
    let negative_branch = c.b_negative && c.tau2_lower_holds == Some(true);

    let verdict = if b < 0.0 {
        Verdict::Unstable
    } else if base && positive_branch {
        Verdict::SufficientStable
    } else {
        Verdict::Inconclusive
    };
    Ok(StabilityVerdict {
        verdict,
        conditions,
        quantities: StabilityQuantities {
            a,
            b,
            tau1_bound,
            tau2_bound,
            consolidated,
        },
        literal_conditions_hold: base && (positive_branch || negative_branch),
        equilibrium: nontrivial(&p).ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayProbe {
    pub decayed: bool,
    pub final_distance: f64,
}

/// Default step for the decay probe: a quarter of the shortest positive delay, at most 0.05.
pub fn probe_step(params: &BoomParams) -> f64 {
    [params.tau1, params.tau2]
        .into_iter()
        .filter(|&t| t > 0.0)
        .map(|t| t / 4.0)
        .fold(0.05, f64::min)
}

/// Starts from constant history `E1 + perturbation` and measures the final
/// `(y1, y2)` distance to `E1`. The perturbation of size `magnitude` is split
/// evenly between `y1` and `y2`.
pub fn perturbation_decay_probe(params: &BoomParams, magnitude: f64, horizon: f64) -> Result<DecayProbe> {
    perturbation_decay_probe_with_step(params, magnitude, horizon, probe_step(params))
}

pub fn perturbation_decay_probe_with_step(
    params: &BoomParams,
    magnitude: f64,
    horizon: f64,
    step: f64,
) -> Result<DecayProbe> {
    if !(magnitude.is_finite() && magnitude >= 0.0) {
        return Err(Error::Config(format!("probe magnitude must be >= 0, got {magnitude}")));
    }
    let p = params.validated()?;
    let eq = nontrivial(&p)?;
    let offset = magnitude / std::f64::consts::SQRT_2;
    let start = StateVec::new(eq.y1_star + offset, eq.y2_star + offset, 0.0, 0.0);
    let traj = match integrate(&p, &HistorySpec::constant(start), horizon, step) {
        Ok(t) => t,
        Err(Error::Divergence { .. }) => {
            return Ok(DecayProbe {
                decayed: false,
                final_distance: f64::INFINITY,
            })
        }
        Err(e) => return Err(e),
    };
    let end = traj.state(traj.len() - 1);
    let distance = (end.y1 - eq.y1_star).hypot(end.y2 - eq.y2_star);
    let decayed = if magnitude == 0.0 {
        distance <= 1e-8
    } else {
        distance < 0.01 * magnitude
    };
    Ok(DecayProbe {
        decayed,
        final_distance: distance,
    })
}
