//! Request and response payloads shared by the command line and the HTTP
//! service. Both front ends build one of these requests, call the matching
//! function here and serialize the result with `serde_json`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use greyalloc::ahp::{self, PairwiseMatrix, WeightVector};
use greyalloc::allocation::{self, Direction, FeedbackConfig, IndicatorTable, RankedEntity, ScoreTable};
use greyalloc::logistic::{self, FitQuality, LogisticParams};
use greyalloc::sensitivity::{self, AllocationSubject, PerturbationSpec, SensitivityReport};
use greyalloc::verhulst::{self, AccuracyReport, GreyVerhulstModel, SaturationResult};
use greyalloc::{io, Error, Execution, TimeSeries};

/// Whether the caller sent something structurally unusable (HTTP 422) or a
/// well-formed request the models could not satisfy (HTTP 400).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    Domain,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody<'a> {
    pub error: &'a ApiError,
}

impl ApiError {
    pub fn invalid(code: &str, message: impl Into<String>) -> Self {
        ApiError {
            kind: ErrorKind::Invalid,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn body(&self) -> ErrorBody<'_> {
        ErrorBody { error: self }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let kind = match e.root() {
            Error::NotSquare { .. }
            | Error::InvalidMatrix(_)
            | Error::OutOfScale { .. }
            | Error::ReciprocityViolation { .. }
            | Error::MissingJudgment { .. }
            | Error::MissingCell { .. }
            | Error::Parse { .. } => ErrorKind::Invalid,
            _ => ErrorKind::Domain,
        };
        ApiError {
            kind,
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;

// ---------------------------------------------------------------------------
// ahp

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AhpRequest {
    pub matrix: PairwiseMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhpResponse {
    #[serde(flatten)]
    pub weights: WeightVector,
    /// Label of the heaviest criterion.
    pub top_criterion: String,
}

fn solve_weights(
    matrix: &PairwiseMatrix,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> ApiResult<AhpResponse> {
    let tol = tol.unwrap_or(ahp::DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(ApiError::invalid("InvalidRequest", format!("tol must be in (0, 1), got {tol}")));
    }
    let max_iter = max_iter.unwrap_or(ahp::DEFAULT_MAX_ITER);
    if max_iter == 0 {
        return Err(ApiError::invalid("InvalidRequest", "max_iter must be positive"));
    }
    let weights = ahp::principal_weights(matrix, tol, max_iter)?;
    let top_criterion = weights.labels[weights.argmax()].clone();
    Ok(AhpResponse {
        weights,
        top_criterion,
    })
}

pub fn ahp(req: &AhpRequest) -> ApiResult<AhpResponse> {
    solve_weights(&req.matrix, req.tol, req.max_iter)
}

// ---------------------------------------------------------------------------
// allocate

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Ahp,
    Factor,
}

/// Indicator values without directions; directions travel separately and
/// default to benefit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorsInput {
    pub entities: Vec<String>,
    pub criteria: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl IndicatorsInput {
    pub fn from_table(table: &IndicatorTable) -> Self {
        IndicatorsInput {
            entities: table.entities.clone(),
            criteria: table.criteria.clone(),
            values: table.values.clone(),
        }
    }

    pub fn to_table(&self, directions: &BTreeMap<String, Direction>) -> greyalloc::Result<IndicatorTable> {
        let resolved = io::resolve_directions(&self.criteria, directions)?;
        IndicatorTable::new(
            self.entities.clone(),
            self.criteria.clone(),
            self.criteria.iter().map(|c| resolved[c]).collect(),
            self.values.clone(),
        )
    }
}

/// Only the cost criteria, which is all a request needs to carry.
pub fn cost_directions(table: &IndicatorTable) -> BTreeMap<String, Direction> {
    table
        .criteria
        .iter()
        .zip(&table.directions)
        .filter(|(_, d)| **d == Direction::Cost)
        .map(|(c, d)| (c.clone(), *d))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PairwiseMatrix>,
    pub indicators: IndicatorsInput,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub directions: BTreeMap<String, Direction>,
    #[serde(default)]
    pub method: Method,
    /// Intercept first, then one coefficient per criterion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    /// Score the indicator values as given instead of normalising them.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub prenormalized: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub max_share: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocateResponse {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<AhpResponse>,
    #[serde(flatten)]
    pub scores: ScoreTable,
    /// Best first; equal scores in entity-name order.
    pub ranking: Vec<RankedEntity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn inconsistency_warning(w: &WeightVector) -> Option<String> {
    (!w.consistent).then(|| {
        format!(
            "comparison matrix is inconsistent (cr = {:.4} >= {}); weights computed anyway",
            w.cr,
            ahp::CR_THRESHOLD
        )
    })
}

fn share_caps(table: &IndicatorTable, max_share: &BTreeMap<String, f64>) -> ApiResult<Vec<Option<f64>>> {
    if let Some(unknown) = max_share.keys().find(|e| table.entity_index(e).is_none()) {
        return Err(Error::Config(format!("max_share for unknown entity '{unknown}'")).into());
    }
    Ok(table.entities.iter().map(|e| max_share.get(e).copied()).collect())
}

pub fn allocate(req: &AllocateRequest) -> ApiResult<AllocateResponse> {
    let table = req.indicators.to_table(&req.directions)?;
    let prepared = if req.prenormalized {
        table.clone()
    } else {
        allocation::normalize_indicators(&table)?
    };
    let mut warnings = Vec::new();
    let (weights, mut scores) = match req.method {
        Method::Ahp => {
            let matrix = req
                .matrix
                .as_ref()
                .ok_or_else(|| ApiError::invalid("MissingMatrix", "method 'ahp' needs a comparison matrix"))?;
            let w = solve_weights(matrix, req.tol, req.max_iter)?;
            warnings.extend(inconsistency_warning(&w.weights));
            let scores = allocation::score_ahp(&prepared, &w.weights)?;
            (Some(w), scores)
        }
        Method::Factor => {
            let betas = req
                .betas
                .as_ref()
                .ok_or_else(|| ApiError::invalid("MissingBetas", "method 'factor' needs betas"))?;
            let scores = allocation::score_factor(&prepared, betas)?;
            for e in &scores.clamped {
                warnings.push(format!("negative factor score for '{e}' clamped to 0"));
            }
            (None, scores)
        }
    };
    if !req.max_share.is_empty() {
        let caps = share_caps(&table, &req.max_share)?;
        scores.proportions = allocation::apply_share_caps(&scores.proportions, &caps)?;
    }
    Ok(AllocateResponse {
        method: req.method,
        weights,
        ranking: scores.ranking(),
        scores,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// forecast

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Verhulst,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub series: TimeSeries,
    #[serde(default)]
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Periods to project past the last observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Params {
    Verhulst(GreyVerhulstModel),
    Logistic(LogisticParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPoint {
    pub period: String,
    pub observed: f64,
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub period: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub model: Model,
    pub params: Params,
    pub points: Vec<FittedPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub projection: Vec<ProjectedPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_quality: Option<FitQuality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Label for 0-based period `idx`; `YYYY-MM` labels are continued month by
/// month past the end of the series.
pub fn period_label(series: &TimeSeries, idx: usize) -> String {
    if idx < series.periods.len() {
        return series.periods[idx].clone();
    }
    let Some(last) = series.periods.last() else {
        return (idx + 1).to_string();
    };
    let ahead = idx + 1 - series.periods.len();
    match last.split_once('-').and_then(|(y, m)| Some((y.parse::<i64>().ok()?, m.parse::<i64>().ok()?))) {
        Some((y, m)) if (1..=12).contains(&m) && last.len() == 7 => {
            let months = y * 12 + (m - 1) + ahead as i64;
            format!("{:04}-{:02}", months.div_euclid(12), months.rem_euclid(12) + 1)
        }
        _ => (idx + 1).to_string(),
    }
}

fn logistic_saturation(p: &LogisticParams, eps: f64) -> Option<SaturationResult> {
    if !(p.k > 0.0) {
        return None;
    }
    (0..=verhulst::SATURATION_SCAN_LIMIT)
        .find(|&t| (p.l - p.predict(t as f64)) / p.l < eps)
        .map(|time| SaturationResult { time, value: p.l })
}

pub fn forecast(req: &ForecastRequest) -> ApiResult<ForecastResponse> {
    let series = &req.series;
    if !series.periods.is_empty() && series.periods.len() != series.values.len() {
        return Err(ApiError::invalid(
            "LabelMismatch",
            format!("{} period labels for {} values", series.periods.len(), series.values.len()),
        ));
    }
    let eps = req.eps.unwrap_or(verhulst::DEFAULT_SATURATION_EPS);
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ApiError::invalid("InvalidRequest", format!("eps must be in (0, 1), got {eps}")));
    }
    let n = series.len();
    let horizon = req.horizon.unwrap_or(0);
    let mut warnings = Vec::new();

    let (params, curve, accuracy, fit_quality, saturation): (Params, Vec<f64>, _, _, _) = match req.model {
        Model::Verhulst => {
            let model = verhulst::fit(series)?;
            let curve = model.fitted(n + horizon)?;
            let accuracy = verhulst::validate(&model, series)?;
            let saturation = match verhulst::saturation(&model, eps) {
                Ok(s) => Some(s),
                Err(e) => {
                    warnings.push(e.to_string());
                    None
                }
            };
            (Params::Verhulst(model), curve, Some(accuracy), None, saturation)
        }
        Model::Logistic => {
            let (p, q) = logistic::fit_logistic(series, None)?;
            if !q.converged {
                warnings.push(format!("fit stopped after {} iterations without converging", q.iterations));
            }
            let saturation = logistic_saturation(&p, eps);
            if saturation.is_none() {
                warnings.push(format!("growth rate k = {} does not approach the capacity", p.k));
            }
            let curve = (0..n + horizon).map(|t| p.predict(t as f64)).collect();
            (Params::Logistic(p), curve, None, Some(q), saturation)
        }
    };

    let points = series
        .values
        .iter()
        .zip(&curve)
        .enumerate()
        .map(|(i, (&observed, &fitted))| FittedPoint {
            period: period_label(series, i),
            observed,
            fitted,
        })
        .collect();
    let projection = (n..n + horizon)
        .map(|i| ProjectedPoint {
            period: period_label(series, i),
            value: curve[i],
        })
        .collect();
    Ok(ForecastResponse {
        model: req.model,
        params,
        points,
        projection,
        accuracy,
        fit_quality,
        saturation,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// sensitivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubjectInput {
    Forecast {
        series: TimeSeries,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
    Allocation {
        matrix: PairwiseMatrix,
        indicators: IndicatorsInput,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        directions: BTreeMap<String, Direction>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        prenormalized: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRequest {
    pub subject: SubjectInput,
    pub specs: Vec<PerturbationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub spec: PerturbationSpec,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResponse {
    pub reports: Vec<SensitivityReport>,
    /// Perturbations that could not be evaluated; the request only fails
    /// when every perturbation does.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<Failure>,
}

pub fn sensitivity(req: &SensitivityRequest, exec: Execution) -> ApiResult<SensitivityResponse> {
    if req.specs.is_empty() {
        return Err(ApiError::invalid("InvalidRequest", "at least one perturbation is required"));
    }
    let results = match &req.subject {
        SubjectInput::Forecast { series, eps } => {
            let eps = eps.unwrap_or(verhulst::DEFAULT_SATURATION_EPS);
            sensitivity::sweep_forecast(series, &req.specs, eps, exec)?
        }
        SubjectInput::Allocation {
            matrix,
            indicators,
            directions,
            prenormalized,
        } => {
            let subject = AllocationSubject {
                matrix: matrix.clone(),
                table: indicators.to_table(directions)?,
                prenormalized: *prenormalized,
            };
            sensitivity::sweep_allocation(&subject, &req.specs, exec)?
        }
    };
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for (spec, r) in req.specs.iter().zip(results) {
        match r {
            Ok(report) => reports.push(report),
            Err(e) => errors.push((spec.clone(), e)),
        }
    }
    if reports.is_empty() {
        let (_, first) = errors.swap_remove(0);
        return Err(first.into());
    }
    let failures = errors
        .into_iter()
        .map(|(spec, e)| Failure {
            spec,
            code: e.code().to_string(),
            message: e.to_string(),
        })
        .collect();
    Ok(SensitivityResponse { reports, failures })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub matrix: PairwiseMatrix,
    pub indicators: IndicatorsInput,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub directions: BTreeMap<String, Direction>,
    pub gamma: BTreeMap<String, f64>,
    pub inflows: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub max_share: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodOutcome {
    pub period: usize,
    pub inflow: f64,
    #[serde(flatten)]
    pub scores: ScoreTable,
    pub ranking: Vec<RankedEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub weights: AhpResponse,
    pub periods: Vec<PeriodOutcome>,
    /// Per-entity share in every period.
    pub trajectory: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn simulate(req: &SimulateRequest) -> ApiResult<SimulateResponse> {
    let table = req.indicators.to_table(&req.directions)?;
    let weights = solve_weights(&req.matrix, None, None)?;
    let config = FeedbackConfig {
        gamma: req.gamma.clone(),
        horizon: req.inflows.len(),
        max_share: req.max_share.clone(),
    };
    let tables = allocation::simulate_feedback(&table, &req.inflows, &weights.weights, &config)?;
    let mut trajectory: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let periods = tables
        .into_iter()
        .zip(&req.inflows)
        .enumerate()
        .map(|(i, (scores, &inflow))| {
            for (e, p) in scores.entities.iter().zip(&scores.proportions) {
                trajectory.entry(e.clone()).or_default().push(*p);
            }
            PeriodOutcome {
                period: i + 1,
                inflow,
                ranking: scores.ranking(),
                scores,
            }
        })
        .collect();
    let warnings = inconsistency_warning(&weights.weights).into_iter().collect();
    Ok(SimulateResponse {
        weights,
        periods,
        trajectory,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// health

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

pub fn health() -> Health {
    Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

/// Re-serialise any JSON text with sorted keys and no whitespace.
pub fn canonical_json(text: &str) -> serde_json::Result<String> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    serde_json::to_string(&v)
}
