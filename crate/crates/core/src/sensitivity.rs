//! One-at-a-time perturbation harness for the forecaster and the allocator.
//!
//! Positions in a [`PerturbationSpec`] are 1-based (period `k`, matrix
//! `row`/`col`), the same convention used on the command line.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ahp::{self, PairwiseMatrix, WeightVector};
use crate::allocation::{self, IndicatorTable, ScoreTable};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::series::{TimeSeries, MIN_FIT_POINTS};
use crate::verhulst;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    /// Drop period `k`; later periods move up by one.
    RemovePoint { k: usize },
    /// Overwrite period `k` with `value`.
    SetPoint { k: usize, value: f64 },
    /// Multiply matrix entry (`row`, `col`) by `factor`; the mirrored entry
    /// is kept reciprocal.
    ScaleMatrixEntry { row: usize, col: usize, factor: f64 },
    /// Multiply one indicator cell by `factor`.
    ScaleIndicator {
        entity: String,
        criterion: String,
        factor: f64,
    },
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationSpec::RemovePoint { k } => write!(f, "remove_point k={k}"),
            PerturbationSpec::SetPoint { k, value } => write!(f, "set_point k={k} value={value}"),
            PerturbationSpec::ScaleMatrixEntry { row, col, factor } => {
                write!(f, "scale_matrix_entry ({row}, {col}) x{factor}")
            }
            PerturbationSpec::ScaleIndicator {
                entity,
                criterion,
                factor,
            } => write!(f, "scale_indicator {entity}/{criterion} x{factor}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankShift {
    pub entity: String,
    pub old_rank: usize,
    pub new_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub spec: PerturbationSpec,
    pub baseline: BTreeMap<String, f64>,
    pub perturbed: BTreeMap<String, f64>,
    /// Symmetric relative change `2(p - b) / (|p| + |b|)` for every output
    /// present on both sides.
    pub deltas: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rank_shifts: Vec<RankShift>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_consistent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbed_consistent: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Symmetric relative difference; antisymmetric in its arguments.
pub fn relative_delta(baseline: f64, perturbed: f64) -> f64 {
    let scale = baseline.abs() + perturbed.abs();
    if scale == 0.0 {
        0.0
    } else {
        2.0 * (perturbed - baseline) / scale
    }
}

pub fn deltas(
    baseline: &BTreeMap<String, f64>,
    perturbed: &BTreeMap<String, f64>,
) -> BTreeMap<String, f64> {
    baseline
        .iter()
        .filter_map(|(k, b)| perturbed.get(k).map(|p| (k.clone(), relative_delta(*b, *p))))
        .collect()
}

fn wrap(spec: &PerturbationSpec) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Perturbation {
        spec: spec.to_string(),
        source: Box::new(e),
    }
}

// ---------------------------------------------------------------------------
// forecast

fn forecast_summary(series: &TimeSeries, eps: f64) -> Result<BTreeMap<String, f64>> {
    let model = verhulst::fit(series)?;
    let mut out = BTreeMap::new();
    out.insert("a".to_string(), model.a);
    out.insert("b".to_string(), model.b);
    if let Ok(acc) = verhulst::validate(&model, series) {
        out.insert("q".to_string(), acc.q);
        out.insert("c".to_string(), acc.c);
        out.insert("p".to_string(), acc.p);
    }
    if let Ok(sat) = verhulst::saturation(&model, eps) {
        out.insert("saturation_value".to_string(), sat.value);
        out.insert("saturation_time".to_string(), sat.time as f64);
    }
    Ok(out)
}

fn apply_to_series(series: &TimeSeries, spec: &PerturbationSpec) -> Result<TimeSeries> {
    let n = series.len();
    let check_k = |k: usize| {
        if k == 0 || k > n {
            Err(Error::InvalidPerturbation(format!(
                "period k={k} outside 1..={n}"
            )))
        } else {
            Ok(k - 1)
        }
    };
    match spec {
        PerturbationSpec::RemovePoint { k } => {
            if n.saturating_sub(1) < MIN_FIT_POINTS {
                return Err(Error::SeriesTooShort {
                    required: MIN_FIT_POINTS,
                    actual: n.saturating_sub(1),
                });
            }
            Ok(series.without(check_k(*k)?))
        }
        PerturbationSpec::SetPoint { k, value } => {
            let idx = check_k(*k)?;
            let mut out = series.clone();
            out.values[idx] = *value;
            Ok(out)
        }
        other => Err(Error::InvalidPerturbation(format!(
            "{other} does not apply to a series"
        ))),
    }
}

/// Refit the Verhulst model after one series perturbation and compare
/// parameters, accuracy and saturation against the unperturbed fit.
pub fn perturb_forecast(
    series: &TimeSeries,
    spec: &PerturbationSpec,
    eps: f64,
) -> Result<SensitivityReport> {
    let baseline = forecast_summary(series, eps).map_err(wrap(spec))?;
    perturb_forecast_against(series, &baseline, spec, eps)
}

fn perturb_forecast_against(
    series: &TimeSeries,
    baseline: &BTreeMap<String, f64>,
    spec: &PerturbationSpec,
    eps: f64,
) -> Result<SensitivityReport> {
    let perturbed_series = apply_to_series(series, spec).map_err(wrap(spec))?;
    let perturbed = forecast_summary(&perturbed_series, eps).map_err(wrap(spec))?;
    let mut notes = Vec::new();
    if baseline.contains_key("saturation_value") != perturbed.contains_key("saturation_value") {
        notes.push("saturation exists on only one side".to_string());
    }
    Ok(SensitivityReport {
        spec: spec.clone(),
        deltas: deltas(baseline, &perturbed),
        baseline: baseline.clone(),
        perturbed,
        rank_shifts: Vec::new(),
        baseline_consistent: None,
        perturbed_consistent: None,
        notes,
    })
}

/// Run many series perturbations against one shared baseline.
pub fn sweep_forecast(
    series: &TimeSeries,
    specs: &[PerturbationSpec],
    eps: f64,
    exec: Execution,
) -> Result<Vec<Result<SensitivityReport>>> {
    let baseline = forecast_summary(series, eps)?;
    Ok(par::map(specs, exec, |spec| {
        perturb_forecast_against(series, &baseline, spec, eps)
    }))
}

// ---------------------------------------------------------------------------
// allocation

/// Comparison matrix plus indicator table; `prenormalized` tables are
/// scored as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSubject {
    pub matrix: PairwiseMatrix,
    pub table: IndicatorTable,
    #[serde(default)]
    pub prenormalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOutcome {
    pub weights: WeightVector,
    pub scores: ScoreTable,
}

impl AllocationSubject {
    pub fn evaluate(&self) -> Result<AllocationOutcome> {
        let weights = ahp::principal_weights(&self.matrix, ahp::DEFAULT_TOL, ahp::DEFAULT_MAX_ITER)?;
        let scores = self.score_with(&weights)?;
        Ok(AllocationOutcome { weights, scores })
    }

    pub fn score_with(&self, weights: &WeightVector) -> Result<ScoreTable> {
        if self.prenormalized {
            allocation::score_ahp(&self.table, weights)
        } else {
            allocation::score_ahp(&allocation::normalize_indicators(&self.table)?, weights)
        }
    }

    fn apply(&self, spec: &PerturbationSpec) -> Result<(AllocationSubject, Vec<String>)> {
        let mut notes = Vec::new();
        match spec {
            PerturbationSpec::ScaleMatrixEntry { row, col, factor } => {
                let n = self.matrix.n();
                if *row == 0 || *col == 0 || *row > n || *col > n || row == col {
                    return Err(Error::InvalidPerturbation(format!(
                        "({row}, {col}) is not an off-diagonal cell of a {n}×{n} matrix"
                    )));
                }
                let (i, j) = (row - 1, col - 1);
                let target = self.matrix.get(i, j) * factor;
                let (matrix, clamped) = self.matrix.with_entry(i, j, target)?;
                if clamped {
                    notes.push(format!(
                        "entry ({row}, {col}) = {target} clamped to {}",
                        matrix.get(i, j)
                    ));
                }
                Ok((
                    AllocationSubject {
                        matrix,
                        ..self.clone()
                    },
                    notes,
                ))
            }
            PerturbationSpec::ScaleIndicator {
                entity,
                criterion,
                factor,
            } => {
                let e = self.table.entity_index(entity).ok_or_else(|| {
                    Error::InvalidPerturbation(format!("unknown entity '{entity}'"))
                })?;
                let c = self
                    .table
                    .criterion_index(criterion)
                    .ok_or_else(|| Error::UnknownCriterion(criterion.clone()))?;
                let mut table = self.table.clone();
                table.values[e][c] *= factor;
                Ok((
                    AllocationSubject {
                        table,
                        ..self.clone()
                    },
                    notes,
                ))
            }
            other => Err(Error::InvalidPerturbation(format!(
                "{other} does not apply to an allocation"
            ))),
        }
    }
}

fn allocation_summary(outcome: &AllocationOutcome) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let w = &outcome.weights;
    for (label, v) in w.labels.iter().zip(&w.weights) {
        out.insert(format!("weight.{label}"), *v);
    }
    out.insert("lambda_max".to_string(), w.lambda_max);
    out.insert("cr".to_string(), w.cr);
    let s = &outcome.scores;
    for ((e, score), prop) in s.entities.iter().zip(&s.scores).zip(&s.proportions) {
        out.insert(format!("score.{e}"), *score);
        out.insert(format!("proportion.{e}"), *prop);
    }
    out
}

/// Recompute weights, consistency, scores and ranks after one perturbation.
/// An inconsistent perturbed matrix is reported, not rejected.
pub fn perturb_allocation(
    subject: &AllocationSubject,
    spec: &PerturbationSpec,
) -> Result<SensitivityReport> {
    let baseline = subject.evaluate().map_err(wrap(spec))?;
    perturb_allocation_against(subject, &baseline, spec)
}

fn perturb_allocation_against(
    subject: &AllocationSubject,
    baseline: &AllocationOutcome,
    spec: &PerturbationSpec,
) -> Result<SensitivityReport> {
    let (perturbed_subject, notes) = subject.apply(spec).map_err(wrap(spec))?;
    let perturbed = perturbed_subject.evaluate().map_err(wrap(spec))?;

    let old_ranks = baseline.scores.ranks();
    let new_ranks = perturbed.scores.ranks();
    let rank_shifts = baseline
        .scores
        .entities
        .iter()
        .zip(old_ranks.iter().zip(&new_ranks))
        .map(|(e, (&o, &n))| RankShift {
            entity: e.clone(),
            old_rank: o,
            new_rank: n,
        })
        .collect();

    let b = allocation_summary(baseline);
    let p = allocation_summary(&perturbed);
    Ok(SensitivityReport {
        spec: spec.clone(),
        deltas: deltas(&b, &p),
        baseline: b,
        perturbed: p,
        rank_shifts,
        baseline_consistent: Some(baseline.weights.consistent),
        perturbed_consistent: Some(perturbed.weights.consistent),
        notes,
    })
}

/// Run many allocation perturbations against one shared baseline.
pub fn sweep_allocation(
    subject: &AllocationSubject,
    specs: &[PerturbationSpec],
    exec: Execution,
) -> Result<Vec<Result<SensitivityReport>>> {
    let baseline = subject.evaluate()?;
    Ok(par::map(specs, exec, |spec| {
        perturb_allocation_against(subject, &baseline, spec)
    }))
}

/// Every (entity, criterion, factor) indicator perturbation.
pub fn indicator_grid(table: &IndicatorTable, factors: &[f64]) -> Vec<PerturbationSpec> {
    let mut out = Vec::with_capacity(table.n_entities() * table.n_criteria() * factors.len());
    for e in &table.entities {
        for c in &table.criteria {
            for &factor in factors {
                out.push(PerturbationSpec::ScaleIndicator {
                    entity: e.clone(),
                    criterion: c.clone(),
                    factor,
                });
            }
        }
    }
    out
}

/// Every upper-triangle matrix-entry perturbation.
pub fn matrix_grid(matrix: &PairwiseMatrix, factors: &[f64]) -> Vec<PerturbationSpec> {
    let n = matrix.n();
    let mut out = Vec::new();
    for row in 1..=n {
        for col in row + 1..=n {
            for &factor in factors {
                out.push(PerturbationSpec::ScaleMatrixEntry { row, col, factor });
            }
        }
    }
    out
}
