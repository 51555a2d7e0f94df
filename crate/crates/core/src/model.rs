//! Four-state boom model with two delayed feedback terms.
//!
//! Participants move between pre-boom (`y1`), on-boom (`y2`), rooted (`y3`)
//! and unrooted (`y4`) states:
//!
//! ```text
//! dy1/dt = -α y1 y2(t-τ1) - δ y1 + ε y2(t-τ2) + ζ
//! dy2/dt =  α y1 y2(t-τ1) - (β+γ) y2 + δ y1
//! dy3/dt =  β y2 - ε y2(t-τ2) - ζ
//! dy4/dt =  γ y2
//! ```
//!
//! The constant transfer `ζ` is signed so that the nontrivial equilibrium
//! `((β+γ)ζ / (αζ + δ(β+γ-ε)), ζ / (β+γ-ε))` is a fixed point of the first two
//! lines. The four lines sum to zero, so total population is conserved.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates and delays of the boom model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoomParams {
    /// Transmission rate per person per unit time.
    pub alpha: f64,
    /// Retention rate.
    pub beta: f64,
    /// Quit rate.
    pub gamma: f64,
    /// Natural adoption rate.
    pub delta: f64,
    /// Resurgence rate, any sign.
    pub epsilon: f64,
    /// Constant "Sakura" transfer rate, any sign.
    pub zeta: f64,
    /// Delay of the infectivity term.
    pub tau1: f64,
    /// Delay of the resurgence term.
    pub tau2: f64,
}

/// A constraint a [`BoomParams`] failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    NonFinite(&'static str),
    AlphaPositive,
    RetentionPlusQuitPositive,
    DeltaPositive,
    Tau1NonNegative,
    Tau2NonNegative,
    DelayOrder,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(name) => write!(f, "{name} finite"),
            Violation::AlphaPositive => f.write_str("alpha > 0"),
            Violation::RetentionPlusQuitPositive => f.write_str("beta + gamma > 0"),
            Violation::DeltaPositive => f.write_str("delta > 0"),
            Violation::Tau1NonNegative => f.write_str("tau1 >= 0"),
            Violation::Tau2NonNegative => f.write_str("tau2 >= 0"),
            Violation::DelayOrder => f.write_str("tau1 < tau2"),
        }
    }
}

impl BoomParams {
    pub const FIELD_NAMES: [&'static str; 8] = [
        "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "tau1", "tau2",
    ];

    fn fields(&self) -> [f64; 8] {
        [
            self.alpha,
            self.beta,
            self.gamma,
            self.delta,
            self.epsilon,
            self.zeta,
            self.tau1,
            self.tau2,
        ]
    }

    /// Checks every constraint and collects all violations.
    pub fn validate(self) -> std::result::Result<Self, Vec<Violation>> {
        let mut violations: Vec<Violation> = Self::FIELD_NAMES
            .iter()
            .zip(self.fields())
            .filter(|(_, v)| !v.is_finite())
            .map(|(name, _)| Violation::NonFinite(name))
            .collect();
        if !violations.is_empty() {
            return Err(violations);
        }
        if self.alpha <= 0.0 {
            violations.push(Violation::AlphaPositive);
        }
        if self.beta + self.gamma <= 0.0 {
            violations.push(Violation::RetentionPlusQuitPositive);
        }
        if self.delta <= 0.0 {
            violations.push(Violation::DeltaPositive);
        }
        if self.tau1 < 0.0 {
            violations.push(Violation::Tau1NonNegative);
        }
        if self.tau2 < 0.0 {
            violations.push(Violation::Tau2NonNegative);
        }
        if self.tau1 >= self.tau2 {
            violations.push(Violation::DelayOrder);
        }
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(violations)
        }
    }

    /// Like [`validate`](Self::validate) but folds violations into an [`Error`].
    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(violations_error)
    }


    /// Checks only what integration needs: finite values and `0 <= τ1 < τ2`.
    ///
    /// Degenerate rates (for example `α = 0`) still define a well-posed system.
    pub fn validate_structure(self) -> std::result::Result<Self, Vec<Violation>> {
        match self.validate() {
            Ok(p) => Ok(p),
            Err(v) => {
                let structural: Vec<Violation> = v
                    .into_iter()
                    .filter(|v| {
                        matches!(
                            v,
                            Violation::NonFinite(_)
                                | Violation::Tau1NonNegative
                                | Violation::Tau2NonNegative
                                | Violation::DelayOrder
                        )
                    })
                    .collect();
                if structural.is_empty() {
                    Ok(self)
                } else {
                    Err(structural)
                }
            }
        }
    }

    /// `β + γ`, the total outflow rate from the on-boom state.
    pub fn outflow(&self) -> f64 {
        self.beta + self.gamma
    }
}

pub(crate) fn violations_error(v: Vec<Violation>) -> Error {
    Error::InvalidParams(v.iter().map(ToString::to_string).collect())
}

/// Free-function form of [`BoomParams::validate`].
pub fn validate_params(params: BoomParams) -> std::result::Result<BoomParams, Vec<Violation>> {
    params.validate()
}

/// Population in each of the four states. Values are real and may go negative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVec {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
}

impl StateVec {
    pub const fn new(y1: f64, y2: f64, y3: f64, y4: f64) -> Self {
        Self { y1, y2, y3, y4 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.y1, self.y2, self.y3, self.y4]
    }

    pub fn total(&self) -> f64 {
        self.y1 + self.y2 + self.y3 + self.y4
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        const NAMES: [&str; 4] = ["y1", "y2", "y3", "y4"];
        match self.to_array().iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                component: format!("{what}.{}", NAMES[i]),
            }),
            None => Ok(()),
        }
    }
}

impl From<[f64; 4]> for StateVec {
    fn from(y: [f64; 4]) -> Self {
        Self::new(y[0], y[1], y[2], y[3])
    }
}

/// Right-hand side given the current state and the on-boom counts `y2(t-τ1)`
/// and `y2(t-τ2)`. No finiteness checks.
#[inline]
pub(crate) fn derivative(y: &[f64; 4], lag1_y2: f64, lag2_y2: f64, p: &BoomParams) -> [f64; 4] {
    let infection = p.alpha * y[0] * lag1_y2;
    let adoption = p.delta * y[0];
    let resurgence = p.epsilon * lag2_y2;
    [
        -infection - adoption + resurgence + p.zeta,
        infection - (p.beta + p.gamma) * y[1] + adoption,
        p.beta * y[1] - resurgence - p.zeta,
        p.gamma * y[1],
    ]
}

/// Evaluates the model right-hand side. Only `y2` of the delayed states is used.
pub fn rhs(
    current: &StateVec,
    delayed_tau1: &StateVec,
    delayed_tau2: &StateVec,
    params: &BoomParams,
) -> Result<StateVec> {
    current.check_finite("current")?;
    delayed_tau1.check_finite("delayed_tau1")?;
    delayed_tau2.check_finite("delayed_tau2")?;
    Ok(derivative(&current.to_array(), delayed_tau1.y2, delayed_tau2.y2, params).into())
}
