//! Grey Verhulst saturation model.
//!
//! The raw series `x1` is treated as the accumulated sequence. Its first
//! differences `x0(k)` and neighbor means `z1(k)` (k = 2..n) give the grey
//! difference equation
//!
//! ```text
//! x0(k) = -a·z1(k) + b·z1(k)²
//! ```
//!
//! whose least-squares estimate `(a, b)` plugs into the whitening solution
//!
//! ```text
//! x̂1(k+1) = a·x0 / (b·x0 + (a - b·x0)·e^{a·k})
//! ```
//!
//! anchored at `x0 = x1(1)`. For `a < 0` and `b < 0` the curve rises to the
//! asymptote `a / b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{self, TimeSeries, MIN_FIT_POINTS};

/// Default relative-change threshold for [`saturation`].
pub const DEFAULT_SATURATION_EPS: f64 = 1e-4;

/// Hard cap on the saturation scan.
pub const SATURATION_SCAN_LIMIT: usize = 1_000_000;

/// Fitted development coefficient `a`, saturation coefficient `b`, and the
/// anchor value of the whitening equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreyVerhulstModel {
    pub a: f64,
    pub b: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    I,
    II,
    III,
    IV,
}

impl Grade {
    /// Level implied by the variance ratio alone.
    pub fn from_variance_ratio(c: f64) -> Grade {
        if c <= 0.35 {
            Grade::I
        } else if c <= 0.50 {
            Grade::II
        } else if c <= 0.65 {
            Grade::III
        } else {
            Grade::IV
        }
    }

    /// Level implied by the small-error probability alone.
    pub fn from_small_error_probability(p: f64) -> Grade {
        if p >= 0.95 {
            Grade::I
        } else if p >= 0.80 {
            Grade::II
        } else if p >= 0.70 {
            Grade::III
        } else {
            Grade::IV
        }
    }

    /// The worse of the two single-test levels. NaN inputs grade IV.
    pub fn from_tests(c: f64, p: f64) -> Grade {
        Grade::from_variance_ratio(c).max(Grade::from_small_error_probability(p))
    }
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Grade::I => "I",
            Grade::II => "II",
            Grade::III => "III",
            Grade::IV => "IV",
        };
        f.write_str(s)
    }
}

/// Posterior accuracy tests: mean relative residual `q`, variance ratio `c`
/// and small-error probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub q: f64,
    pub c: f64,
    pub p: f64,
    pub grade: Grade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationResult {
    /// First period index `k ≥ 1` whose relative step falls below `eps`.
    pub time: usize,
    /// Asymptote `a / b`.
    pub value: f64,
}

/// Least-squares estimate of `(a, b)` from the raw series.
pub fn fit(series: &TimeSeries) -> Result<GreyVerhulstModel> {
    series.require_len(MIN_FIT_POINTS)?;
    series.require_positive()?;

    let x0 = series::difference(series)?;
    let z1 = series::neighbor_mean(series)?;

    // BᵀB and BᵀY with rows [-z, z²]
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&z, &y) in z1.values().iter().zip(x0.values()) {
        let (c1, c2) = (-z, z * z);
        s11 += c1 * c1;
        s12 += c1 * c2;
        s22 += c2 * c2;
        r1 += c1 * y;
        r2 += c2 * y;
    }
    // 1 - cos²(angle between the two columns); invariant to rescaling the data
    let det = s11 * s22 - s12 * s12;
    let collinearity = det / (s11 * s22);
    if !(collinearity.abs() >= 1e-12) || !det.is_finite() {
        return Err(Error::SingularSystem { det });
    }
    let a = (s22 * r1 - s12 * r2) / det;
    let b = (s11 * r2 - s12 * r1) / det;
    if b == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(Error::SingularSystem { det });
    }
    Ok(GreyVerhulstModel {
        a,
        b,
        x0: series.values[0],
    })
}

impl GreyVerhulstModel {
    /// `x̂1(k+1)`, i.e. the fitted value `k` periods after the anchor.
    pub fn predict(&self, k: usize) -> Result<f64> {
        self.predict_at(k as f64).map_err(|_| Error::NumericOverflow { k })
    }

    /// Whitening curve at continuous time `t ≥ 0`.
    pub fn predict_at(&self, t: f64) -> Result<f64> {
        let (a, b, x0) = (self.a, self.b, self.x0);
        let denom = b * x0 + (a - b * x0) * (a * t).exp();
        let value = a * x0 / denom;
        if denom == 0.0 || !value.is_finite() {
            return Err(Error::NumericOverflow { k: t as usize });
        }
        Ok(value)
    }

    /// Fitted values for the first `n` periods (k = 0..n).
    pub fn fitted(&self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|k| self.predict(k)).collect()
    }

    /// True when the curve rises to a finite positive asymptote.
    pub fn converges(&self) -> bool {
        self.a < 0.0 && self.a / self.b > 0.0 && (self.a / self.b).is_finite()
    }

    pub fn asymptote(&self) -> f64 {
        self.a / self.b
    }
}

/// Convenience wrapper matching [`GreyVerhulstModel::predict`].
pub fn predict(model: &GreyVerhulstModel, k: usize) -> Result<f64> {
    model.predict(k)
}

/// Asymptote and the first period whose relative change drops below `eps`.
pub fn saturation(model: &GreyVerhulstModel, eps: f64) -> Result<SaturationResult> {
    if !model.converges() {
        return Err(Error::NoSaturation {
            a: model.a,
            b: model.b,
        });
    }
    let mut prev = model.predict(0)?;
    for k in 1..=SATURATION_SCAN_LIMIT {
        let cur = model.predict(k)?;
        if (cur - prev).abs() / prev.max(f64::MIN_POSITIVE) < eps {
            return Ok(SaturationResult {
                time: k,
                value: model.asymptote(),
            });
        }
        prev = cur;
    }
    Err(Error::NoSaturation {
        a: model.a,
        b: model.b,
    })
}

/// Residual tests of `model` against the observed `series`.
///
/// Residuals are `x1(k) - x̂1(k)` over every observed period. Standard
/// deviations are population deviations.
pub fn validate(model: &GreyVerhulstModel, series: &TimeSeries) -> Result<AccuracyReport> {
    series.require_len(MIN_FIT_POINTS)?;
    let fitted = model.fitted(series.len())?;
    let residuals: Vec<f64> = series
        .values
        .iter()
        .zip(&fitted)
        .map(|(x, f)| x - f)
        .collect();
    Ok(accuracy_from_residuals(&series.values, &residuals))
}

pub(crate) fn accuracy_from_residuals(observed: &[f64], residuals: &[f64]) -> AccuracyReport {
    let n = observed.len() as f64;
    let q = observed
        .iter()
        .zip(residuals)
        .map(|(x, e)| (e / x).abs())
        .sum::<f64>()
        / n;
    let s1 = series::population_std(observed);
    let s2 = series::population_std(residuals);
    let c = if s2 == 0.0 { 0.0 } else { s2 / s1 };
    let e_mean = series::mean(residuals);
    let hits = residuals
        .iter()
        .filter(|e| (*e - e_mean).abs() < 0.6745 * s1)
        .count();
    let p = hits as f64 / n;
    AccuracyReport {
        q,
        c,
        p,
        grade: Grade::from_tests(c, p),
    }
}
