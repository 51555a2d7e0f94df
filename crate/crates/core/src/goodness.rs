//! Fit quality between an observed series and model predictions.
//!
//! The coefficient of determination here centers the residuals:
//!
//! ```text
//! R² = 1 - Σ(E_i - Ē)² / Σ(Y_i - Ȳ)²,   E_i = Y_i - F_i
//! ```
//!
//! so a prediction off by a constant scores 1, and a bad fit can go below 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Caveat attached to every reported R².
pub const R_SQUARED_NOTE: &str = "R^2 = 1 - sum((E_i - mean(E))^2) / sum((Y_i - mean(Y))^2) with E_i = Y_i - F_i; \
residuals are centered, so a constant offset between data and model is not penalized and values below 0 are possible";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Divisor applied to the raw values (1 when not normalized).
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl ObservedSeries {
    /// Builds a series, enforcing at least three points, strictly increasing
    /// finite times, and finite non-negative values.
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let series = Self {
            label: label.into(),
            times,
            values,
            scale: 1.0,
        };
        series.check()?;
        Ok(series)
    }

    pub fn check(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "{} times but {} values",
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.len() < 3 {
            return Err(Error::Validation(format!(
                "need at least 3 points, got {}",
                self.times.len()
            )));
        }
        if let Some(i) = self.times.iter().position(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("time at index {i} is not finite")));
        }
        if let Some(i) = self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation(format!(
                "value at index {i} must be finite and >= 0, got {}",
                self.values[i]
            )));
        }
        if let Some(i) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Validation(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    /// Time from the first to the last observation.
    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Divides values by their maximum and records the divisor.
    pub fn normalized(mut self) -> Result<Self> {
        let peak = self.max_value();
        if peak <= 0.0 {
            return Err(Error::Validation("cannot normalize an all-zero series".into()));
        }
        for v in &mut self.values {
            *v /= peak;
        }
        self.scale *= peak;
        Ok(self)
    }
}

/// Model values aligned index-by-index with an [`ObservedSeries`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSeries {
    pub values: Vec<f64>,
}

impl From<Vec<f64>> for PredictedSeries {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub values: Vec<f64>,
    pub mean: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn aligned(observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.len() != predicted.len() || observed.is_empty() {
        return Err(Error::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    Ok(())
}

/// Elementwise `Y_i - F_i` and their mean.
pub fn residuals(observed: &[f64], predicted: &[f64]) -> Result<Residuals> {
    aligned(observed, predicted)?;
    let values: Vec<f64> = observed.iter().zip(predicted).map(|(y, f)| y - f).collect();
    let mean = mean(&values);
    Ok(Residuals { values, mean })
}

/// Centered-residual coefficient of determination, unclamped.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    let res = residuals(observed, predicted)?;
    let y_mean = mean(observed);
    let total: f64 = observed.iter().map(|y| (y - y_mean).powi(2)).sum();
    if total == 0.0 {
        return Err(Error::Undefined("R^2 of a constant observed series".into()));
    }
    let unexplained: f64 = res.values.iter().map(|e| (e - res.mean).powi(2)).sum();
    Ok(1.0 - unexplained / total)
}

pub fn rmse(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    let res = residuals(observed, predicted)?;
    Ok((res.values.iter().map(|e| e * e).sum::<f64>() / res.values.len() as f64).sqrt())
}

/// [`r_squared`] over the typed series.
pub fn r_squared_series(observed: &ObservedSeries, predicted: &PredictedSeries) -> Result<f64> {
    r_squared(&observed.values, &predicted.values)
}
