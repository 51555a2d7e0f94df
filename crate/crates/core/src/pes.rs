//! Analyst-driven estimation loop.
//!
//! A session starts from heuristic guesses for the hand-set quantities
//! `ζ, τ1, τ2`, runs one sampling round per iteration, and pauses for review
//! after each. The analyst adjusts `ζ, τ1, τ2` between rounds and finally
//! picks the iteration with the highest R².

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goodness::ObservedSeries;
use crate::inference::{FixedSettings, ThetaFree};
use crate::model::StateVec;
use crate::report::{fit_round, FitReport, McmcConfig};

/// Starting values for the hand-set quantities derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuesses {
    pub zeta0: f64,
    pub tau1_0: f64,
    pub tau2_0: f64,
    /// Set when no interior peak exists and `τ1` fell back to a quarter of the span.
    pub fallback: bool,
}

/// Three-point moving average; endpoints are averaged over the available neighbors.
fn smooth3(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Interior indices strictly greater than both neighbors.
pub fn local_maxima(values: &[f64], smooth: bool) -> Vec<usize> {
    let smoothed;
    let v = if smooth {
        smoothed = smooth3(values);
        &smoothed[..]
    } else {
        values
    };
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1])
        .collect()
}

/// `ζ0` is 5% of the peak value; `τ1` runs from the start to the first local
/// maximum; `τ2` from there to the largest later maximum (else `2 τ1`).
pub fn initial_guesses(observed: &ObservedSeries, smooth: bool) -> InitialGuesses {
    let zeta0 = 0.05 * observed.max_value();
    let t = &observed.times;
    let peaks = local_maxima(&observed.values, smooth);
    let Some((&first, rest)) = peaks.split_first() else {
        let tau1_0 = observed.span() / 4.0;
        return InitialGuesses {
            zeta0,
            tau1_0,
            tau2_0: 2.0 * tau1_0,
            fallback: true,
        };
    };
    let tau1_0 = t[first] - t[0];
    // first-wins on ties
    let later = rest
        .iter()
        .copied()
        .reduce(|best, i| if observed.values[i] > observed.values[best] { i } else { best });
    let mut tau2_0 = match later {
        Some(i) => t[i] - t[first],
        None => 2.0 * tau1_0,
    };
    if tau2_0 <= tau1_0 {
        let spacing = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        tau2_0 = tau1_0 + spacing;
    }
    InitialGuesses {
        zeta0,
        tau1_0,
        tau2_0,
        fallback: false,
    }
}

/// The hand-tuned quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedValues {
    pub zeta: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl FixedValues {
    pub fn check(&self) -> Result<()> {
        if ![self.zeta, self.tau1, self.tau2].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("zeta, tau1, tau2 must be finite".into()));
        }
        if self.tau1 < 0.0 {
            return Err(Error::Config("tau1 >= 0".into()));
        }
        if self.tau1 >= self.tau2 {
            return Err(Error::Config("tau1 < tau2".into()));
        }
        Ok(())
    }
}

impl From<InitialGuesses> for FixedValues {
    fn from(g: InitialGuesses) -> Self {
        Self {
            zeta: g.zeta0,
            tau1: g.tau1_0,
            tau2: g.tau2_0,
        }
    }
}

/// Settings that stay constant over a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub initial_state: StateVec,
    pub step: f64,
    pub sigma_obs: f64,
    #[serde(default)]
    pub smooth_peaks: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Draft,
    Running,
    AwaitingReview,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    pub index: usize,
    /// The adjustment requested for this round, if any.
    pub adjustment: Option<FixedValues>,
    pub fixed: FixedValues,
    pub report: FitReport,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesSession {
    #[serde(default)]
    pub id: Option<String>,
    pub observed: ObservedSeries,
    pub settings: SessionSettings,
    pub guesses: InitialGuesses,
    pub fixed: FixedValues,
    /// Current rate estimate; the posterior mean of the latest round.
    pub theta: ThetaFree,
    pub log: Vec<IterationEntry>,
    pub status: SessionStatus,
    pub final_index: Option<usize>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl PesSession {
    /// Seeds a session: `ζ, τ1, τ2` from [`initial_guesses`], rates from `theta`.
    pub fn new(observed: ObservedSeries, settings: SessionSettings, theta: ThetaFree) -> Result<Self> {
        observed.check()?;
        if !theta.in_support() {
            return Err(Error::Config(format!("initial rates {theta:?} outside support")));
        }
        if !(settings.sigma_obs.is_finite() && settings.sigma_obs > 0.0) {
            return Err(Error::Config("sigma_obs must be positive".into()));
        }
        if !(settings.step.is_finite() && settings.step > 0.0) {
            return Err(Error::Config("step must be positive".into()));
        }
        let guesses = initial_guesses(&observed, settings.smooth_peaks);
        Ok(Self {
            id: None,
            observed,
            settings,
            guesses,
            fixed: guesses.into(),
            theta,
            log: Vec::new(),
            status: SessionStatus::Draft,
            final_index: None,
        })
    }

    fn ensure_mutable(&self) -> Result<()> {
        if self.status == SessionStatus::Finalized {
            return Err(Error::Session("session is finalized".into()));
        }
        Ok(())
    }

    pub fn latest(&self) -> Option<&IterationEntry> {
        self.log.last()
    }

    /// Runs one round with an optional new `(ζ, τ1, τ2)`. On any error the
    /// session is left untouched.
    pub fn iterate(&mut self, adjustment: Option<FixedValues>, mcmc: &McmcConfig) -> Result<&IterationEntry> {
        self.iterate_with_progress(adjustment, mcmc, |_, _| {})
    }

    pub fn iterate_with_progress<P: FnMut(usize, usize)>(
        &mut self,
        adjustment: Option<FixedValues>,
        mcmc: &McmcConfig,
        progress: P,
    ) -> Result<&IterationEntry> {
        self.ensure_mutable()?;
        let fixed = adjustment.unwrap_or(self.fixed);
        fixed.check()?;
        let settings = FixedSettings {
            zeta: fixed.zeta,
            tau1: fixed.tau1,
            tau2: fixed.tau2,
            initial_state: self.settings.initial_state,
            sigma_obs: self.settings.sigma_obs,
            step: self.settings.step,
        };
        let report = fit_round(&self.observed, self.theta, &settings, mcmc, progress)?;
        self.theta = report.params.into();
        self.fixed = fixed;
        self.log.push(IterationEntry {
            index: self.log.len(),
            adjustment,
            fixed,
            report,
            timestamp_ms: now_ms(),
        });
        self.status = SessionStatus::AwaitingReview;
        Ok(self.log.last().expect("entry just pushed"))
    }

    /// Index of the entry with the highest R², earliest on ties.
    pub fn best_index(&self) -> Option<usize> {
        self.log
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, e)| match best {
                Some((_, r)) if e.report.r_squared <= r => best,
                _ => Some((i, e.report.r_squared)),
            })
            .map(|(i, _)| i)
    }

    /// Freezes the session and returns the best report.
    pub fn finalize(&mut self) -> Result<FitReport> {
        self.ensure_mutable()?;
        let best = self
            .best_index()
            .ok_or_else(|| Error::Session("no completed iteration to finalize".into()))?;
        self.status = SessionStatus::Finalized;
        self.final_index = Some(best);
        Ok(self.log[best].report.clone())
    }
}

/// Free-function form of [`PesSession::iterate`].
pub fn pes_iterate(session: &mut PesSession, adjustment: Option<FixedValues>, mcmc: &McmcConfig) -> Result<()> {
    session.iterate(adjustment, mcmc).map(|_| ())
}

pub fn finalize(session: &mut PesSession) -> Result<FitReport> {
    session.finalize()
}
