//! Three-parameter logistic baseline `f(t) = L / (1 + b·e^{-k·t})`, fitted
//! by Levenberg–Marquardt damped Gauss–Newton on `t = 0, 1, …, n-1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{TimeSeries, MIN_FIT_POINTS};

pub const MAX_ITERATIONS: usize = 500;
const RSS_REL_TOL: f64 = 1e-10;
const STEP_REL_TOL: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Carrying capacity.
    #[serde(rename = "capacity")]
    pub l: f64,
    /// Shape; `L / (1 + b)` is the value at `t = 0`.
    pub b: f64,
    /// Growth rate per period.
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub r2: f64,
    pub rss: f64,
    pub tss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the observations have zero variance; `r2` is then reported as 0.
    pub degenerate_variance: bool,
}

impl LogisticParams {
    pub fn predict(&self, t: f64) -> f64 {
        self.l / (1.0 + self.b * (-self.k * t).exp())
    }

    /// Partial derivatives of `f(t)` with respect to `(L, b, k)`.
    pub fn jacobian(&self, t: f64) -> [f64; 3] {
        let e = (-self.k * t).exp();
        let d = 1.0 + self.b * e;
        [
            1.0 / d,
            -self.l * e / (d * d),
            self.l * self.b * t * e / (d * d),
        ]
    }

    fn is_valid(&self) -> bool {
        self.l > 0.0 && self.b > 0.0 && self.l.is_finite() && self.b.is_finite() && self.k.is_finite()
    }

    fn as_array(&self) -> [f64; 3] {
        [self.l, self.b, self.k]
    }
}

pub fn predict_logistic(params: &LogisticParams, t: f64) -> f64 {
    params.predict(t)
}

/// Logit-linearised starting point: `L₀ = 1.05·max(y)`, then `(k₀, ln b₀)`
/// from regressing `logit(y / L₀)` on `t`.
pub fn initial_guess(y: &[f64]) -> LogisticParams {
    let max = y.iter().cloned().fold(f64::MIN, f64::max);
    let l0 = 1.05 * max;
    let delta = 1e-9 * l0;
    let n = y.len() as f64;
    let logits: Vec<f64> = y
        .iter()
        .map(|v| {
            let p = (v + delta) / l0;
            (p / (1.0 - p)).ln()
        })
        .collect();
    let t_mean = (n - 1.0) / 2.0;
    let g_mean = logits.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, g) in logits.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (g - g_mean);
        sxx += dt * dt;
    }
    let k0 = sxy / sxx;
    let intercept = g_mean - k0 * t_mean;
    LogisticParams {
        l: l0,
        b: (-intercept).exp(),
        k: k0,
    }
}

fn rss(params: &LogisticParams, y: &[f64]) -> f64 {
    y.iter()
        .enumerate()
        .map(|(t, v)| (params.predict(t as f64) - v).powi(2))
        .sum()
}

/// Solve a 3×3 system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < f64::MIN_POSITIVE || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = rhs[row];
        for c in row + 1..3 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn fit_logistic(
    series: &TimeSeries,
    init: Option<LogisticParams>,
) -> Result<(LogisticParams, FitQuality)> {
    series.require_len(MIN_FIT_POINTS)?;
    series.require_positive()?;
    let y = &series.values;

    let mut params = match init {
        Some(p) if p.is_valid() => p,
        _ => initial_guess(y),
    };
    let mut cur = rss(&params, y);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut history: Vec<f64> = vec![cur];

    'outer: while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (t, v) in y.iter().enumerate() {
            let j = params.jacobian(t as f64);
            let r = params.predict(t as f64) - v;
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        if cur == 0.0 {
            converged = true;
            break;
        }

        loop {
            let mut damped = jtj;
            for d in 0..3 {
                damped[d][d] += lambda * jtj[d][d].max(1e-12);
            }
            let candidate = solve3(damped, [-jtr[0], -jtr[1], -jtr[2]]).map(|step| {
                let p = params.as_array();
                (
                    LogisticParams {
                        l: p[0] + step[0],
                        b: p[1] + step[1],
                        k: p[2] + step[2],
                    },
                    step,
                )
            });
            if let Some((next, step)) = candidate {
                let next_rss = if next.is_valid() { rss(&next, y) } else { f64::INFINITY };
                if next_rss < cur {
                    let rel_change = (cur - next_rss) / cur;
                    let p_norm = params.as_array().iter().map(|v| v * v).sum::<f64>().sqrt();
                    let s_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                    params = next;
                    cur = next_rss;
                    history.push(cur);
                    lambda = (lambda / 10.0).max(1e-15);
                    if rel_change < RSS_REL_TOL {
                        converged = true;
                    }
                    // keep polishing until the step itself vanishes
                    if s_norm < STEP_REL_TOL * p_norm.max(1.0) {
                        converged = true;
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no descent direction left at machine precision
                converged = true;
                break 'outer;
            }
        }
    }

    if !converged {
        let tail = &history[history.len().saturating_sub(10)..];
        let hi = tail.iter().cloned().fold(f64::MIN, f64::max);
        let lo = tail.iter().cloned().fold(f64::MAX, f64::min);
        if hi - lo > 0.01 * lo.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::DivergedFit { iterations });
        }
    }

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let degenerate_variance = tss == 0.0;
    let r2 = if degenerate_variance { 0.0 } else { 1.0 - cur / tss };
    Ok((
        params,
        FitQuality {
            r2,
            rss: cur,
            tss,
            converged,
            iterations,
            degenerate_variance,
        },
    ))
}
