//! Fit reports: parameters, fit quality, stability verdict and overlay data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goodness::{r_squared, rmse, ObservedSeries, R_SQUARED_NOTE};
use crate::inference::{
    posterior_summary, predict_y2, run_chain_with_progress, FixedSettings, Posterior, PosteriorSummary,
    ThetaFree,
};
use crate::model::{BoomParams, StateVec};
use crate::stability::{check_stability, StabilityVerdict};

/// Observation grid with data and model curve side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub times: Vec<f64>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Sampler settings for one calibration round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Per-parameter proposal standard deviations; defaults to 5% of the start values.
    #[serde(default)]
    pub scales: Option<[f64; 5]>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 20_000,
            burn_in: 5_000,
            seed: 1,
            scales: None,
        }
    }
}

impl McmcConfig {
    pub fn check(&self) -> Result<()> {
        if self.burn_in > self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must not exceed n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if let Some(s) = &self.scales {
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config("proposal scales must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub summary: PosteriorSummary,
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub proposal_scales: Vec<f64>,
    pub initial: ThetaFree,
    pub sigma_obs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub label: String,
    pub params: BoomParams,
    pub initial_state: StateVec,
    pub step: f64,
    pub r_squared: f64,
    pub r_squared_note: String,
    pub rmse: f64,
    /// `None` when the conditions cannot be evaluated; see `stability_note`.
    pub stability: Option<StabilityVerdict>,
    pub stability_note: Option<String>,
    pub overlay: Overlay,
    /// Divisor applied to the observed values before fitting.
    pub scale: f64,
    pub chain: Option<ChainDiagnostics>,
}

impl FitReport {
    /// Recomputes R² from the stored overlay.
    pub fn recomputed_r_squared(&self) -> Result<f64> {
        r_squared(&self.overlay.observed, &self.overlay.predicted)
    }
}

/// Evaluates `params` against `observed` and assembles a report.
pub fn build_report(
    observed: &ObservedSeries,
    params: &BoomParams,
    initial_state: StateVec,
    step: f64,
    chain: Option<ChainDiagnostics>,
) -> Result<FitReport> {
    let fixed = FixedSettings {
        zeta: params.zeta,
        tau1: params.tau1,
        tau2: params.tau2,
        initial_state,
        sigma_obs: 1.0,
        step,
    };
    let predicted = predict_y2(params, observed, &fixed)?;
    let (stability, stability_note) = match check_stability(params) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(FitReport {
        label: observed.label.clone(),
        params: *params,
        initial_state,
        step,
        r_squared: r_squared(&observed.values, &predicted)?,
        r_squared_note: R_SQUARED_NOTE.to_string(),
        rmse: rmse(&observed.values, &predicted)?,
        stability,
        stability_note,
        overlay: Overlay {
            times: observed.times.clone(),
            observed: observed.values.clone(),
            predicted,
        },
        scale: observed.scale,
        chain,
    })
}

/// One calibration round: sample the rates, then report at the posterior mean.
pub fn fit_round<P: FnMut(usize, usize)>(
    observed: &ObservedSeries,
    init: ThetaFree,
    fixed: &FixedSettings,
    mcmc: &McmcConfig,
    progress: P,
) -> Result<FitReport> {
    mcmc.check()?;
    let posterior = Posterior::new(observed, *fixed)?;
    let scales = mcmc.scales.unwrap_or_else(|| init.default_scales());
    let chain = run_chain_with_progress(&posterior, init, mcmc.n_iter, &scales, mcmc.seed, progress)?;
    let summary = posterior_summary(&chain, mcmc.burn_in)?;
    let mean = summary.theta_mean();
    let params = posterior.params(&mean);
    let diagnostics = ChainDiagnostics {
        summary,
        n_iter: mcmc.n_iter,
        burn_in: mcmc.burn_in,
        seed: mcmc.seed,
        proposal_scales: scales.to_vec(),
        initial: init,
        sigma_obs: fixed.sigma_obs,
    };
    build_report(observed, &params, fixed.initial_state, fixed.step, Some(diagnostics))
}
