//! Random-walk Metropolis-Hastings calibration of the five rates
//! `α, β, γ, δ, ε` against an observed on-boom series.
//!
//! The likelihood treats each observation as `Y_i ~ N(y2(t_i), σ_obs²)` with
//! `y2` from the integrator; priors are flat on `α > 0, β + γ > 0, δ > 0`.
//! Parameters outside that region, or whose simulation diverges, score `-∞`
//! and are never accepted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dde::{integrate, HistorySpec};
use crate::error::{Error, Result};
use crate::goodness::ObservedSeries;
use crate::model::{BoomParams, StateVec};

/// The sampled rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaFree {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl ThetaFree {
    pub const NAMES: [&'static str; 5] = ["alpha", "beta", "gamma", "delta", "epsilon"];

    pub fn to_array(self) -> [f64; 5] {
        [self.alpha, self.beta, self.gamma, self.delta, self.epsilon]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            alpha: v[0],
            beta: v[1],
            gamma: v[2],
            delta: v[3],
            epsilon: v[4],
        }
    }

    pub fn in_support(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.alpha > 0.0
            && self.beta + self.gamma > 0.0
            && self.delta > 0.0
    }

    pub fn with_fixed(self, zeta: f64, tau1: f64, tau2: f64) -> BoomParams {
        BoomParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            epsilon: self.epsilon,
            zeta,
            tau1,
            tau2,
        }
    }

    /// Default proposal scales: 5% of each magnitude, never below `1e-3`.
    pub fn default_scales(&self) -> [f64; 5] {
        self.to_array().map(|v| (0.05 * v.abs()).max(1e-3))
    }
}

impl From<BoomParams> for ThetaFree {
    fn from(p: BoomParams) -> Self {
        Self {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            delta: p.delta,
            epsilon: p.epsilon,
        }
    }
}

/// Quantities held fixed while sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedSettings {
    pub zeta: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// State at the first observation time; history before it is constant.
    pub initial_state: StateVec,
    pub sigma_obs: f64,
    pub step: f64,
}

/// Log posterior over [`ThetaFree`] for one observed series.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    observed: &'a ObservedSeries,
    fixed: FixedSettings,
}

impl<'a> Posterior<'a> {
    pub fn new(observed: &'a ObservedSeries, fixed: FixedSettings) -> Result<Self> {
        observed.check()?;
        if !(fixed.sigma_obs.is_finite() && fixed.sigma_obs > 0.0) {
            return Err(Error::Config(format!(
                "sigma_obs must be positive, got {}",
                fixed.sigma_obs
            )));
        }
        if fixed.tau1.partial_cmp(&fixed.tau2) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config("tau1 < tau2".into()));
        }
        Ok(Self { observed, fixed })
    }

    pub fn fixed(&self) -> &FixedSettings {
        &self.fixed
    }

    pub fn observed(&self) -> &ObservedSeries {
        self.observed
    }

    pub fn params(&self, theta: &ThetaFree) -> BoomParams {
        theta.with_fixed(self.fixed.zeta, self.fixed.tau1, self.fixed.tau2)
    }

    /// Model `y2` at every observation time. Model time 0 is the first observation.
    pub fn predict(&self, theta: &ThetaFree) -> Result<Vec<f64>> {
        predict_y2(&self.params(theta), self.observed, &self.fixed)
    }

    pub fn log_posterior(&self, theta: &ThetaFree) -> f64 {
        if !theta.in_support() {
            return f64::NEG_INFINITY;
        }
        let Ok(predicted) = self.predict(theta) else {
            return f64::NEG_INFINITY;
        };
        let sse: f64 = self
            .observed
            .values
            .iter()
            .zip(&predicted)
            .map(|(y, f)| (y - f).powi(2))
            .sum();
        let lp = -sse / (2.0 * self.fixed.sigma_obs * self.fixed.sigma_obs);
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

/// `y2(t_i - t_0)` for each observation time.
pub fn predict_y2(params: &BoomParams, observed: &ObservedSeries, fixed: &FixedSettings) -> Result<Vec<f64>> {
    let t0 = observed.start();
    let horizon = observed.span().max(fixed.step);
    let traj = integrate(params, &HistorySpec::constant(fixed.initial_state), horizon, fixed.step)?;
    observed
        .times
        .iter()
        .map(|t| traj.sample_at(t - t0).map(|s| s.y2))
        .collect()
}

/// Free-function form of [`Posterior::log_posterior`].
pub fn log_posterior(theta: &ThetaFree, fixed: &FixedSettings, observed: &ObservedSeries) -> Result<f64> {
    Ok(Posterior::new(observed, *fixed)?.log_posterior(theta))
}

/// Outcome of a single Metropolis-Hastings transition.
#[derive(Debug, Clone, PartialEq)]
pub struct MhStep {
    pub next: Vec<f64>,
    pub log_posterior: f64,
    pub accepted: bool,
}

/// Accept/reject decision for a symmetric proposal. Draws a uniform only when
/// the proposal is downhill.
pub fn accept<R: Rng + ?Sized>(current_lp: f64, proposed_lp: f64, rng: &mut R) -> bool {
    if proposed_lp.is_nan() || proposed_lp == f64::NEG_INFINITY {
        return false;
    }
    if proposed_lp >= current_lp {
        return true;
    }
    let u: f64 = rng.random();
    u < (proposed_lp - current_lp).exp()
}

/// Proposes `θ' ~ N(θ, diag(scales²))` and accepts with probability
/// `min(1, exp(lp(θ') - lp(θ)))`; on rejection the chain stays at `θ`.
pub fn mh_step<R, F>(current: &[f64], current_lp: f64, rng: &mut R, scales: &[f64], mut target: F) -> MhStep
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let proposal: Vec<f64> = current
        .iter()
        .zip(scales)
        .map(|(x, s)| {
            let z: f64 = rng.sample(StandardNormal);
            x + s * z
        })
        .collect();
    let lp = target(&proposal);
    if accept(current_lp, lp, rng) {
        MhStep {
            next: proposal,
            log_posterior: lp,
            accepted: true,
        }
    } else {
        MhStep {
            next: current.to_vec(),
            log_posterior: current_lp,
            accepted: false,
        }
    }
}

/// Sequence of states visited by the sampler. Index 0 is the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub log_posteriors: Vec<f64>,
    /// `accepted[k]` tells whether sample `k` came from an accepted proposal;
    /// always `false` for the initial point.
    pub accepted: Vec<bool>,
    pub proposal_scales: Vec<f64>,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }

    pub fn acceptance_rate(&self) -> f64 {
        let n = self.iterations();
        if n == 0 {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / n as f64
    }

    pub fn theta(&self, k: usize) -> ThetaFree {
        ThetaFree::from_slice(&self.samples[k])
    }

    /// Values of parameter `j` across the chain.
    pub fn trace(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(move |s| s[j])
    }
}

/// Runs `n_iter` Metropolis-Hastings transitions from `init` against an arbitrary log-target.
pub fn run_mh<F, P>(
    names: &[&str],
    init: &[f64],
    n_iter: usize,
    scales: &[f64],
    seed: u64,
    mut target: F,
    mut progress: P,
) -> Result<Chain>
where
    F: FnMut(&[f64]) -> f64,
    P: FnMut(usize, usize),
{
    if names.len() != init.len() || scales.len() != init.len() {
        return Err(Error::Config(format!(
            "dimension mismatch: {} names, {} initial values, {} scales",
            names.len(),
            init.len(),
            scales.len()
        )));
    }
    if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Config(format!("proposal scales must be positive, got {s}")));
    }
    let init_lp = target(init);
    if !init_lp.is_finite() {
        return Err(Error::Config(
            "initial point lies outside the posterior support".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = Chain {
        names: names.iter().map(|s| s.to_string()).collect(),
        samples: Vec::with_capacity(n_iter + 1),
        log_posteriors: Vec::with_capacity(n_iter + 1),
        accepted: Vec::with_capacity(n_iter + 1),
        proposal_scales: scales.to_vec(),
        seed,
    };
    chain.samples.push(init.to_vec());
    chain.log_posteriors.push(init_lp);
    chain.accepted.push(false);
    let mut current = init.to_vec();
    let mut current_lp = init_lp;
    for i in 0..n_iter {
        let step = mh_step(&current, current_lp, &mut rng, scales, &mut target);
        current = step.next;
        current_lp = step.log_posterior;
        chain.samples.push(current.clone());
        chain.log_posteriors.push(current_lp);
        chain.accepted.push(step.accepted);
        progress(i + 1, n_iter);
    }
    Ok(chain)
}

/// Samples the rate posterior; deterministic given `seed`.
pub fn run_chain(
    posterior: &Posterior<'_>,
    init: ThetaFree,
    n_iter: usize,
    scales: &[f64; 5],
    seed: u64,
) -> Result<Chain> {
    run_chain_with_progress(posterior, init, n_iter, scales, seed, |_, _| {})
}

pub fn run_chain_with_progress<P: FnMut(usize, usize)>(
    posterior: &Posterior<'_>,
    init: ThetaFree,
    n_iter: usize,
    scales: &[f64; 5],
    seed: u64,
    progress: P,
) -> Result<Chain> {
    if !init.in_support() {
        return Err(Error::Config(format!(
            "initial rates {init:?} outside support (alpha > 0, beta + gamma > 0, delta > 0)"
        )));
    }
    run_mh(
        &ThetaFree::NAMES,
        &init.to_array(),
        n_iter,
        scales,
        seed,
        |x| posterior.log_posterior(&ThetaFree::from_slice(x)),
        progress,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    /// 2.5% quantile.
    pub lower: f64,
    /// 97.5% quantile.
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
    pub acceptance_rate: f64,
    pub burn_in: usize,
    pub samples_used: usize,
}

impl PosteriorSummary {
    pub fn means(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.mean).collect()
    }

    pub fn theta_mean(&self) -> ThetaFree {
        ThetaFree::from_slice(&self.means())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Moments and central 95% interval over samples `burn_in..`.
pub fn posterior_summary(chain: &Chain, burn_in: usize) -> Result<PosteriorSummary> {
    if burn_in >= chain.len() {
        return Err(Error::Config(format!(
            "burn-in {burn_in} leaves no samples from a chain of length {}",
            chain.len()
        )));
    }
    let kept = &chain.samples[burn_in..];
    let n = kept.len();
    let parameters = chain
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut xs: Vec<f64> = kept.iter().map(|s| s[j]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            xs.sort_by(f64::total_cmp);
            ParameterSummary {
                name: name.clone(),
                mean,
                std: var.sqrt(),
                lower: quantile(&xs, 0.025),
                upper: quantile(&xs, 0.975),
            }
        })
        .collect();
    Ok(PosteriorSummary {
        parameters,
        acceptance_rate: chain.acceptance_rate(),
        burn_in,
        samples_used: n,
    })
}
