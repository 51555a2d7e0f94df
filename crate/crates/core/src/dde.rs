//! Method-of-steps integration for constant-delay systems.
//!
//! Classic fourth-order Runge-Kutta on a uniform grid. Delayed values inside
//! the integrated range come from the cubic Hermite interpolant built on the
//! stored states and derivatives; before `t = 0` the history is constant and
//! equal to the initial state. Each positive delay must span at least four
//! steps so that every delayed lookup lands in already-computed history.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derivative, BoomParams, StateVec};

/// Abort threshold on any state magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// How the solution is extended to negative times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HistoryMode {
    #[default]
    ConstantEqualToInitial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistorySpec {
    pub initial_state: StateVec,
    #[serde(default)]
    pub history_mode: HistoryMode,
}

impl HistorySpec {
    pub fn constant(initial_state: StateVec) -> Self {
        Self {
            initial_state,
            history_mode: HistoryMode::ConstantEqualToInitial,
        }
    }
}

/// Uniform-grid solution with stored derivatives, evaluable anywhere in range
/// by cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution<const N: usize> {
    step: f64,
    states: Vec<[f64; N]>,
    derivatives: Vec<[f64; N]>,
}

impl<const N: usize> DenseSolution<N> {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.states.len() - 1)
    }

    pub fn states(&self) -> &[[f64; N]] {
        &self.states
    }

    pub fn derivatives(&self) -> &[[f64; N]] {
        &self.derivatives
    }

    pub fn sample(&self, t: f64) -> Result<[f64; N]> {
        let end = self.end_time();
        // allow rounding slop at the upper end
        if !(t >= 0.0 && t <= end + 1e-9 * self.step) {
            return Err(Error::OutOfRange { t, start: 0.0, end });
        }
        Ok(self.interpolate(t.min(end)))
    }

    /// Hermite interpolation, `0 <= t <= end` assumed.
    fn interpolate(&self, t: f64) -> [f64; N] {
        let last = self.states.len() - 1;
        if last == 0 {
            return self.states[0];
        }
        let nearest = (t / self.step).round() as usize;
        if nearest <= last && self.time(nearest) == t {
            return self.states[nearest];
        }
        let k = ((t / self.step).floor() as usize).min(last - 1);
        let s = (t - self.time(k)) / self.step;
        if s == 0.0 {
            return self.states[k];
        }
        hermite(
            &self.states[k],
            &self.derivatives[k],
            &self.states[k + 1],
            &self.derivatives[k + 1],
            s,
            self.step,
        )
    }
}

#[inline]
fn hermite<const N: usize>(
    y0: &[f64; N],
    d0: &[f64; N],
    y1: &[f64; N],
    d1: &[f64; N],
    s: f64,
    h: f64,
) -> [f64; N] {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    std::array::from_fn(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i])
}

/// Number of grid intervals covering `[0, horizon]`.
fn interval_count(horizon: f64, step: f64) -> usize {
    let ratio = horizon / step;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

fn check_grid(horizon: f64, step: f64, delays: &[f64]) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    if !(horizon.is_finite() && horizon >= step) {
        return Err(Error::Config(format!(
            "horizon {horizon} must be at least one step ({step})"
        )));
    }
    for &tau in delays {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::Config(format!("delay {tau} must be finite and >= 0")));
        }
        if tau > 0.0 && step > tau / 4.0 {
            return Err(Error::Config(format!(
                "step {step} too coarse for delay {tau}: need step <= {}",
                tau / 4.0
            )));
        }
    }
    Ok(())
}

/// Integrates `y' = f(y, [y(t - τ_j)])` with constant history `y0` on negative times.
///
/// `f` receives the current stage state and one delayed state per entry of
/// `delays`. A zero delay feeds the current stage state back.
fn integrate_rk4<const N: usize, const D: usize, F>(
    y0: [f64; N],
    delays: [f64; D],
    horizon: f64,
    step: f64,
    f: F,
) -> Result<DenseSolution<N>>
where
    F: Fn(&[f64; N], &[[f64; N]; D]) -> [f64; N],
{
    check_grid(horizon, step, &delays)?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: "initial_state".into(),
        });
    }
    let n = interval_count(horizon, step);
    let mut sol = DenseSolution {
        step,
        states: Vec::with_capacity(n + 1),
        derivatives: Vec::with_capacity(n + 1),
    };
    sol.states.push(y0);

    // Delayed value at time `s` given the stage state `y` at the current stage time.
    let lagged = |sol: &DenseSolution<N>, s: f64, tau: f64, y: &[f64; N]| -> [f64; N] {
        if tau == 0.0 {
            *y
        } else if s <= 0.0 {
            y0
        } else {
            sol.interpolate(s)
        }
    };
    let eval = |sol: &DenseSolution<N>, t: f64, y: &[f64; N]| -> [f64; N] {
        let lags: [[f64; N]; D] = std::array::from_fn(|j| lagged(sol, t - delays[j], delays[j], y));
        f(y, &lags)
    };
    let axpy = |y: &[f64; N], a: f64, k: &[f64; N]| -> [f64; N] { std::array::from_fn(|i| y[i] + a * k[i]) };

    for k in 0..n {
        let t = sol.time(k);
        let y = sol.states[k];
        // k1 doubles as the stored derivative at t_k; lookups only touch indices < k.
        let k1 = eval(&sol, t, &y);
        sol.derivatives.push(k1);
        let k2 = eval(&sol, t + 0.5 * step, &axpy(&y, 0.5 * step, &k1));
        let k3 = eval(&sol, t + 0.5 * step, &axpy(&y, 0.5 * step, &k2));
        let k4 = eval(&sol, t + step, &axpy(&y, step, &k3));
        let next: [f64; N] =
            std::array::from_fn(|i| y[i] + step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence {
                time: sol.time(k + 1),
            });
        }
        sol.states.push(next);
    }
    let last = sol.states[n];
    let d_last = eval(&sol, sol.time(n), &last);
    sol.derivatives.push(d_last);
    Ok(sol)
}

/// Boom-model solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    params: BoomParams,
    horizon: f64,
    dense: DenseSolution<4>,
}

impl Trajectory {
    pub fn params(&self) -> &BoomParams {
        &self.params
    }

    pub fn step(&self) -> f64 {
        self.dense.step()
    }

    /// Requested horizon; the last grid point may overshoot it by less than one step.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.dense.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dense.time(k)
    }

    pub fn end_time(&self) -> f64 {
        self.dense.end_time()
    }

    pub fn times(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn state(&self, k: usize) -> StateVec {
        self.dense.states()[k].into()
    }

    pub fn derivative(&self, k: usize) -> StateVec {
        self.dense.derivatives()[k].into()
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = StateVec> + '_ {
        self.dense.states().iter().map(|&s| s.into())
    }

    pub fn sample_at(&self, t: f64) -> Result<StateVec> {
        self.dense.sample(t).map(Into::into)
    }
}

/// Integrates the boom model over `[0, horizon]` with step `step`.
///
/// Only the structural constraints are enforced here (see
/// [`BoomParams::validate_structure`]); rate positivity is left to callers.
pub fn integrate(params: &BoomParams, history: &HistorySpec, horizon: f64, step: f64) -> Result<Trajectory> {
    let params = params
        .validate_structure()
        .map_err(crate::model::violations_error)?;
    let p = params;
    let dense = integrate_rk4(
        history.initial_state.to_array(),
        [p.tau1, p.tau2],
        horizon,
        step,
        |y, lags| derivative(y, lags[0][1], lags[1][1], &p),
    )?;
    Ok(Trajectory {
        params,
        horizon,
        dense,
    })
}

/// Free-function form of [`Trajectory::sample_at`].
pub fn sample_at(traj: &Trajectory, t: f64) -> Result<StateVec> {
    traj.sample_at(t)
}

/// Solution of the delayed logistic equation `x' = a x (1 - x(t-τ)/K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTrajectory {
    dense: DenseSolution<1>,
}

impl ScalarTrajectory {
    pub fn len(&self) -> usize {
        self.dense.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dense.time(k)
    }

    pub fn value(&self, k: usize) -> f64 {
        self.dense.states()[k][0]
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.dense.states().iter().map(|s| s[0])
    }

    pub fn end_value(&self) -> f64 {
        self.value(self.len() - 1)
    }

    pub fn sample_at(&self, t: f64) -> Result<f64> {
        self.dense.sample(t).map(|s| s[0])
    }
}

pub fn integrate_hutchinson(
    alpha: f64,
    capacity: f64,
    tau: f64,
    x0: f64,
    horizon: f64,
    step: f64,
) -> Result<ScalarTrajectory> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParams(vec!["alpha > 0".into()]));
    }
    if !(capacity.is_finite() && capacity > 0.0) {
        return Err(Error::InvalidParams(vec!["K > 0".into()]));
    }
    let dense = integrate_rk4([x0], [tau], horizon, step, |x, lag| {
        [alpha * x[0] * (1.0 - lag[0][0] / capacity)]
    })?;
    Ok(ScalarTrajectory { dense })
}
