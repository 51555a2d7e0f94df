//! File formats: observed series (CSV), run configuration (`key=value`),
//! and JSON documents for reports and sessions.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dde::Trajectory;
use crate::error::{Error, Result};
use crate::goodness::ObservedSeries;
use crate::inference::ThetaFree;
use crate::model::{BoomParams, StateVec};
use crate::pes::{initial_guesses, FixedValues, PesSession, SessionSettings};
use crate::report::{FitReport, McmcConfig};

fn parse_f64(text: &str) -> Option<f64> {
    // `f64::from_str` also accepts "inf"/"nan"; reject them along with separators
    let t = text.trim();
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return None;
    }
    t.parse().ok()
}

/// Parses a series from CSV text with header `t,value`.
pub fn parse_series(text: &str, label: &str, source: &Path) -> Result<ObservedSeries> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(Error::Validation(format!("{}: empty series file", source.display())));
    };
    let header: Vec<String> = header
        .trim_start_matches('\u{feff}')
        .split(',')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if header != ["t", "value"] {
        return Err(err(hline, format!("expected header \"t,value\", got {header:?}")));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 2 {
            return Err(err(line, format!("expected 2 fields, got {}", fields.len())));
        }
        let t = parse_f64(fields[0]).ok_or_else(|| err(line, format!("invalid time {:?}", fields[0])))?;
        let v = parse_f64(fields[1]).ok_or_else(|| err(line, format!("invalid value {:?}", fields[1])))?;
        if v < 0.0 {
            return Err(Error::Validation(format!(
                "{}:{line}: negative value {v}",
                source.display()
            )));
        }
        if let Some(&prev) = times.last() {
            if t == prev {
                return Err(Error::Validation(format!(
                    "{}:{line}: duplicate time {t}",
                    source.display()
                )));
            }
            if t < prev {
                return Err(Error::Validation(format!(
                    "{}:{line}: time {t} is earlier than the previous row ({prev})",
                    source.display()
                )));
            }
        }
        times.push(t);
        values.push(v);
    }
    ObservedSeries::new(label, times, values)
        .map_err(|e| Error::Validation(format!("{}: {e}", source.display())))
}

/// Reads a series file; with `normalize` the values are divided by their peak.
pub fn load_series(path: &Path, normalize: bool) -> Result<ObservedSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = parse_series(&text, &label, path)?;
    if normalize {
        series.normalized()
    } else {
        Ok(series)
    }
}

/// Everything a run needs. Unset optional values are resolved per command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// Falls back to the data heuristic when fitting, else 0.05.
    pub zeta: Option<f64>,
    /// Falls back to the data heuristic when fitting, else 1.
    pub tau1: Option<f64>,
    /// Falls back to the data heuristic when fitting, else 2.
    pub tau2: Option<f64>,
    pub y1_0: f64,
    /// Falls back to the first observation when fitting, else 0.01.
    pub y2_0: Option<f64>,
    pub y3_0: f64,
    pub y4_0: f64,
    pub step: f64,
    /// Falls back to the data span when fitting, else 100.
    pub horizon: Option<f64>,
    /// Falls back to 10% of the series maximum.
    pub sigma_obs: Option<f64>,
    pub n_iter: usize,
    pub burn_in: usize,
    pub scales: Option<[f64; 5]>,
    pub seed: u64,
    pub normalize: bool,
    pub smooth_peaks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.5,
            delta: 0.1,
            epsilon: 0.2,
            zeta: None,
            tau1: None,
            tau2: None,
            y1_0: 1.0,
            y2_0: None,
            y3_0: 0.0,
            y4_0: 0.0,
            step: 0.01,
            horizon: None,
            sigma_obs: None,
            n_iter: 20_000,
            burn_in: 5_000,
            scales: None,
            seed: 1,
            normalize: false,
            smooth_peaks: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "data",
    "alpha",
    "beta",
    "gamma",
    "delta",
    "epsilon",
    "zeta",
    "tau1",
    "tau2",
    "y1_0",
    "y2_0",
    "y3_0",
    "y4_0",
    "step",
    "horizon",
    "sigma_obs",
    "n_iter",
    "burn_in",
    "scale_alpha",
    "scale_beta",
    "scale_gamma",
    "scale_delta",
    "scale_epsilon",
    "seed",
    "normalize",
    "smooth_peaks",
];

fn key_error(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn real(key: &str, value: &str) -> Result<f64> {
    let v = parse_f64(value).ok_or_else(|| key_error(key, format!("expected a number, got {value:?}")))?;
    if !v.is_finite() {
        return Err(key_error(key, "must be finite"));
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<u64> {
    value
        .trim()
        .parse()
        .map_err(|_| key_error(key, format!("expected a non-negative integer, got {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(key_error(key, format!("expected true or false, got {other:?}"))),
    }
}

impl RunConfig {
    /// Parses `key=value` lines without cross-field validation. Relative
    /// `data` paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            cfg.set(key.trim(), value.trim())?;
            if key.trim() == "data" {
                if let Some(p) = &cfg.data {
                    if p.is_relative() {
                        cfg.data = Some(base_dir.join(p));
                    }
                }
            }
        }
        Ok(cfg)
    }

    /// Applies one `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let scale_slot = |s: &mut Self, j: usize| -> Result<()> {
            let v = real(key, value)?;
            let mut scales = s.scales.unwrap_or_else(|| s.theta().default_scales());
            scales[j] = v;
            s.scales = Some(scales);
            Ok(())
        };
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "alpha" => self.alpha = real(key, value)?,
            "beta" => self.beta = real(key, value)?,
            "gamma" => self.gamma = real(key, value)?,
            "delta" => self.delta = real(key, value)?,
            "epsilon" => self.epsilon = real(key, value)?,
            "zeta" => self.zeta = Some(real(key, value)?),
            "tau1" => self.tau1 = Some(real(key, value)?),
            "tau2" => self.tau2 = Some(real(key, value)?),
            "y1_0" => self.y1_0 = real(key, value)?,
            "y2_0" => self.y2_0 = Some(real(key, value)?),
            "y3_0" => self.y3_0 = real(key, value)?,
            "y4_0" => self.y4_0 = real(key, value)?,
            "step" => self.step = real(key, value)?,
            "horizon" => self.horizon = Some(real(key, value)?),
            "sigma_obs" => self.sigma_obs = Some(real(key, value)?),
            "n_iter" => self.n_iter = count(key, value)? as usize,
            "burn_in" => self.burn_in = count(key, value)? as usize,
            "scale_alpha" => scale_slot(self, 0)?,
            "scale_beta" => scale_slot(self, 1)?,
            "scale_gamma" => scale_slot(self, 2)?,
            "scale_delta" => scale_slot(self, 3)?,
            "scale_epsilon" => scale_slot(self, 4)?,
            "seed" => self.seed = count(key, value)?,
            "normalize" => self.normalize = flag(key, value)?,
            "smooth_peaks" => self.smooth_peaks = flag(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if self.step <= 0.0 {
            return Err(key_error("step", "must be > 0"));
        }
        if let Some(h) = self.horizon {
            if h < 0.0 {
                return Err(key_error("horizon", "must be >= 0"));
            }
        }
        if let Some(s) = self.sigma_obs {
            if s <= 0.0 {
                return Err(key_error("sigma_obs", "must be > 0"));
            }
        }
        if let Some(t) = self.tau1 {
            if t < 0.0 {
                return Err(key_error("tau1", "must be >= 0"));
            }
        }
        if let (Some(t1), Some(t2)) = (self.tau1, self.tau2) {
            if t1 >= t2 {
                return Err(Error::Config("tau1 < tau2".into()));
            }
        }
        if self.burn_in > self.n_iter {
            return Err(key_error("burn_in", "must not exceed n_iter"));
        }
        if let Some(s) = &self.scales {
            if let Some(j) = s.iter().position(|v| *v <= 0.0) {
                return Err(key_error(&format!("scale_{}", ThetaFree::NAMES[j]), "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn theta(&self) -> ThetaFree {
        ThetaFree {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            epsilon: self.epsilon,
        }
    }

    /// Parameters for simulation and stability checks, with the non-data defaults.
    pub fn params(&self) -> BoomParams {
        self.theta()
            .with_fixed(self.zeta.unwrap_or(0.05), self.tau1.unwrap_or(1.0), self.tau2.unwrap_or(2.0))
    }

    pub fn initial_state(&self, observed: Option<&ObservedSeries>) -> StateVec {
        let y2 = self
            .y2_0
            .or_else(|| observed.map(|o| o.values[0]))
            .unwrap_or(0.01);
        StateVec::new(self.y1_0, y2, self.y3_0, self.y4_0)
    }

    pub fn sigma_obs_for(&self, observed: &ObservedSeries) -> f64 {
        self.sigma_obs.unwrap_or_else(|| 0.1 * observed.max_value())
    }

    /// `ζ, τ1, τ2` for fitting: explicit values win over the data heuristics.
    pub fn fixed_for(&self, observed: &ObservedSeries) -> Result<FixedValues> {
        let g = initial_guesses(observed, self.smooth_peaks);
        let fixed = FixedValues {
            zeta: self.zeta.unwrap_or(g.zeta0),
            tau1: self.tau1.unwrap_or(g.tau1_0),
            tau2: self.tau2.unwrap_or(g.tau2_0),
        };
        fixed.check()?;
        Ok(fixed)
    }

    pub fn session_settings(&self, observed: &ObservedSeries) -> SessionSettings {
        SessionSettings {
            initial_state: self.initial_state(Some(observed)),
            step: self.step,
            sigma_obs: self.sigma_obs_for(observed),
            smooth_peaks: self.smooth_peaks,
        }
    }

    /// Seeds an estimation session; explicit `zeta`/`tau1`/`tau2` replace the heuristic start.
    pub fn start_session(&self, observed: ObservedSeries) -> Result<PesSession> {
        let fixed = self.fixed_for(&observed)?;
        let settings = self.session_settings(&observed);
        let mut session = PesSession::new(observed, settings, self.theta())?;
        session.fixed = fixed;
        Ok(session)
    }

    pub fn mcmc(&self) -> McmcConfig {
        McmcConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            seed: self.seed,
            scales: self.scales,
        }
    }
}

/// Parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let cfg = load_config_unvalidated(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a configuration file, leaving validation to the caller (for overrides).
pub fn load_config_unvalidated(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    RunConfig::parse(&text, base)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = to_json(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn emit_report(report: &FitReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<FitReport> {
    read_json(path)
}

/// Writes `t,y1,y2,y3,y4` rows using shortest round-trip float formatting.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,y1,y2,y3,y4")?;
    for (t, s) in traj.times().zip(traj.states()) {
        writeln!(out, "{t},{},{},{},{}", s.y1, s.y2, s.y3, s.y4)?;
    }
    Ok(())
}
