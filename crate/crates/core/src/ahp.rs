//! Pairwise comparison matrices, principal-eigenvector weights and the
//! consistency ratio check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCALE_MIN: f64 = 1.0 / 9.0;
pub const SCALE_MAX: f64 = 9.0;
pub const MAX_CRITERIA: usize = 10;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Matrices with a consistency ratio below this are accepted.
pub const CR_THRESHOLD: f64 = 0.1;

const RECIPROCITY_TOL: f64 = 1e-9;
const SCALE_TOL: f64 = 1e-9;

/// Random consistency index for an `n × n` matrix.
pub fn random_index(n: usize) -> f64 {
    const RI: [f64; 11] = [0.0, 0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];
    RI.get(n).copied().unwrap_or(1.49)
}

/// One upper-triangle judgment: criterion `i` is `value` times as important
/// as criterion `j` (0-based, `i < j`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct RawMatrix {
    #[serde(default)]
    labels: Vec<String>,
    entries: Vec<Vec<f64>>,
}

/// Square positive reciprocal judgment matrix on the Saaty scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct PairwiseMatrix {
    labels: Vec<String>,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<RawMatrix> for PairwiseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        let labels = if raw.labels.is_empty() {
            (1..=raw.entries.len()).map(|i| format!("c{i}")).collect()
        } else {
            raw.labels
        };
        PairwiseMatrix::new(labels, raw.entries)
    }
}

fn in_scale(v: f64) -> bool {
    v.is_finite() && v >= SCALE_MIN * (1.0 - SCALE_TOL) && v <= SCALE_MAX * (1.0 + SCALE_TOL)
}

impl PairwiseMatrix {
    /// Validates shape, unit diagonal, reciprocity (1e-9 relative) and scale.
    pub fn new(labels: Vec<String>, entries: Vec<Vec<f64>>) -> Result<Self> {
        let n = entries.len();
        if let Some(row) = entries.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: row.len(),
            });
        }
        if !(2..=MAX_CRITERIA).contains(&n) {
            return Err(Error::InvalidMatrix(format!(
                "size {n} outside 2..={MAX_CRITERIA}"
            )));
        }
        if labels.len() != n {
            return Err(Error::LabelMismatch(format!(
                "{} labels for a {n}×{n} matrix",
                labels.len()
            )));
        }
        for i in 0..n {
            if (entries[i][i] - 1.0).abs() > RECIPROCITY_TOL {
                return Err(Error::InvalidMatrix(format!(
                    "diagonal entry ({0}, {0}) is {1}, expected 1",
                    i + 1,
                    entries[i][i]
                )));
            }
            for j in 0..n {
                let v = entries[i][j];
                if !in_scale(v) {
                    return Err(Error::OutOfScale {
                        i: i + 1,
                        j: j + 1,
                        value: v,
                    });
                }
                if j > i && (v * entries[j][i] - 1.0).abs() > RECIPROCITY_TOL {
                    return Err(Error::ReciprocityViolation {
                        i: i + 1,
                        j: j + 1,
                        upper: v,
                        lower: entries[j][i],
                    });
                }
            }
        }
        Ok(Self { labels, entries })
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// Copy with `a[i][j] = value` and `a[j][i] = 1/value`. Values outside
    /// the scale are clamped; the flag reports whether that happened.
    pub fn with_entry(&self, i: usize, j: usize, value: f64) -> Result<(PairwiseMatrix, bool)> {
        let n = self.n();
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidMatrix(format!(
                "entry ({}, {}) is not an off-diagonal cell of a {n}×{n} matrix",
                i + 1,
                j + 1
            )));
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::OutOfScale {
                i: i + 1,
                j: j + 1,
                value,
            });
        }
        let clamped = value.clamp(SCALE_MIN, SCALE_MAX);
        let mut entries = self.entries.clone();
        entries[i][j] = clamped;
        entries[j][i] = 1.0 / clamped;
        Ok((
            PairwiseMatrix {
                labels: self.labels.clone(),
                entries,
            },
            clamped != value,
        ))
    }

    /// Rows, columns and labels reordered so that new position `p` holds old `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> PairwiseMatrix {
        PairwiseMatrix {
            labels: perm.iter().map(|&p| self.labels[p].clone()).collect(),
            entries: perm
                .iter()
                .map(|&r| perm.iter().map(|&c| self.entries[r][c]).collect())
                .collect(),
        }
    }

    fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Reciprocal completion from the `n(n-1)/2` upper-triangle judgments.
pub fn build_matrix(labels: Vec<String>, judgments: &[Judgment]) -> Result<PairwiseMatrix> {
    let n = labels.len();
    if !(2..=MAX_CRITERIA).contains(&n) {
        return Err(Error::InvalidMatrix(format!(
            "{n} criteria outside 2..={MAX_CRITERIA}"
        )));
    }
    let mut upper: Vec<Vec<Option<f64>>> = vec![vec![None; n]; n];
    for jd in judgments {
        if jd.i >= jd.j || jd.j >= n {
            return Err(Error::InvalidMatrix(format!(
                "judgment ({}, {}) is not in the upper triangle of a {n}×{n} matrix",
                jd.i + 1,
                jd.j + 1
            )));
        }
        if !in_scale(jd.value) {
            return Err(Error::OutOfScale {
                i: jd.i + 1,
                j: jd.j + 1,
                value: jd.value,
            });
        }
        if upper[jd.i][jd.j].replace(jd.value).is_some() {
            return Err(Error::InvalidMatrix(format!(
                "duplicate judgment ({}, {})",
                jd.i + 1,
                jd.j + 1
            )));
        }
    }
    let mut entries = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = upper[i][j].ok_or(Error::MissingJudgment { i: i + 1, j: j + 1 })?;
            entries[i][j] = v;
            entries[j][i] = 1.0 / v;
        }
    }
    PairwiseMatrix::new(labels, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub ci: f64,
    pub ri: f64,
    pub cr: f64,
    pub consistent: bool,
}

impl Consistency {
    pub fn from_lambda(lambda_max: f64, n: usize) -> Consistency {
        let ri = random_index(n);
        if n <= 2 {
            return Consistency {
                ci: 0.0,
                ri,
                cr: 0.0,
                consistent: true,
            };
        }
        let ci = (lambda_max - n as f64) / (n as f64 - 1.0);
        let cr = ci / ri;
        Consistency {
            ci,
            ri,
            cr,
            consistent: cr < CR_THRESHOLD,
        }
    }
}

/// Criterion weights with the principal eigenvalue and consistency metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    pub lambda_max: f64,
    pub ci: f64,
    pub ri: f64,
    pub cr: f64,
    pub consistent: bool,
    pub iterations: usize,
}

impl WeightVector {
    /// Weights that bypass the eigen-solve, e.g. externally supplied ones.
    /// Consistency fields are zeroed.
    pub fn from_weights(labels: Vec<String>, weights: Vec<f64>) -> Result<WeightVector> {
        if labels.len() != weights.len() {
            return Err(Error::LabelMismatch(format!(
                "{} labels for {} weights",
                labels.len(),
                weights.len()
            )));
        }
        Ok(WeightVector {
            labels,
            weights,
            lambda_max: f64::NAN,
            ci: 0.0,
            ri: 0.0,
            cr: 0.0,
            consistent: true,
            iterations: 0,
        })
    }

    pub fn weight(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.weights[i])
    }

    /// Index of the largest weight.
    pub fn argmax(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn consistency(&self) -> Consistency {
        Consistency {
            ci: self.ci,
            ri: self.ri,
            cr: self.cr,
            consistent: self.consistent,
        }
    }
}

/// Dominant eigenvector by power iteration, normalised to sum 1.
///
/// Stops when every component's relative change is below `tol`.
pub fn principal_weights(
    matrix: &PairwiseMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<WeightVector> {
    let n = matrix.n();
    let mut w = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(Error::NoConvergence { iterations });
        }
        iterations += 1;
        let mut next = matrix.mul_vec(&w);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change = next
            .iter()
            .zip(&w)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < tol {
            break;
        }
    }
    let aw = matrix.mul_vec(&w);
    let lambda_max = aw.iter().zip(&w).map(|(a, b)| a / b).sum::<f64>() / n as f64;
    let c = Consistency::from_lambda(lambda_max, n);
    Ok(WeightVector {
        labels: matrix.labels.clone(),
        weights: w,
        lambda_max,
        ci: c.ci,
        ri: c.ri,
        cr: c.cr,
        consistent: c.consistent,
        iterations,
    })
}

pub fn consistency(matrix: &PairwiseMatrix) -> Result<Consistency> {
    Ok(principal_weights(matrix, DEFAULT_TOL, DEFAULT_MAX_ITER)?.consistency())
}
