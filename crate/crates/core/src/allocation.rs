//! Indicator normalisation, weighted scoring, allocation proportions and the
//! inflow feedback dynamics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ahp::WeightVector;
use crate::error::{Error, Result};

/// Whether a larger raw value should raise (benefit) or lower (cost) an
/// entity's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Benefit,
    Cost,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benefit" => Ok(Direction::Benefit),
            "cost" => Ok(Direction::Cost),
            other => Err(Error::Config(format!(
                "direction must be 'benefit' or 'cost', got '{other}'"
            ))),
        }
    }
}

/// Entities × criteria indicator values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTable {
    pub entities: Vec<String>,
    pub criteria: Vec<String>,
    pub directions: Vec<Direction>,
    /// One row per entity, one column per criterion.
    pub values: Vec<Vec<f64>>,
}

impl IndicatorTable {
    pub fn new(
        entities: Vec<String>,
        criteria: Vec<String>,
        directions: Vec<Direction>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let table = Self {
            entities,
            criteria,
            directions,
            values,
        };
        table.check_shape()?;
        Ok(table)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.directions.len() != self.criteria.len() {
            return Err(Error::LabelMismatch(format!(
                "{} directions for {} criteria",
                self.directions.len(),
                self.criteria.len()
            )));
        }
        if self.values.len() != self.entities.len() {
            return Err(Error::LabelMismatch(format!(
                "{} rows for {} entities",
                self.values.len(),
                self.entities.len()
            )));
        }
        for (row, entity) in self.values.iter().zip(&self.entities) {
            if row.len() != self.criteria.len() {
                let criterion = self
                    .criteria
                    .get(row.len())
                    .cloned()
                    .unwrap_or_else(|| "<extra>".into());
                return Err(Error::MissingCell {
                    entity: entity.clone(),
                    criterion,
                });
            }
        }
        Ok(())
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_criteria(&self) -> usize {
        self.criteria.len()
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == name)
    }

    pub fn criterion_index(&self, name: &str) -> Option<usize> {
        self.criteria.iter().position(|c| c == name)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[c]).collect()
    }
}

/// Per-entity scores and their shares of the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub entities: Vec<String>,
    pub scores: Vec<f64>,
    pub proportions: Vec<f64>,
    /// Entities whose negative score was clamped to 0 before proportioning.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clamped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub rank: usize,
    pub entity: String,
    pub score: f64,
    pub proportion: f64,
}

impl ScoreTable {
    /// Entity indices ordered best-first; equal scores fall back to name order.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.entities.len()).collect();
        idx.sort_by(|&a, &b| {
            self.scores[b]
                .total_cmp(&self.scores[a])
                .then_with(|| self.entities[a].cmp(&self.entities[b]))
        });
        idx
    }

    /// 1-based rank of every entity, in entity order.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.entities.len()];
        for (pos, i) in self.order().into_iter().enumerate() {
            ranks[i] = pos + 1;
        }
        ranks
    }

    pub fn ranking(&self) -> Vec<RankedEntity> {
        self.order()
            .into_iter()
            .enumerate()
            .map(|(pos, i)| RankedEntity {
                rank: pos + 1,
                entity: self.entities[i].clone(),
                score: self.scores[i],
                proportion: self.proportions[i],
            })
            .collect()
    }

    pub fn proportion_of(&self, entity: &str) -> Option<f64> {
        self.entities
            .iter()
            .position(|e| e == entity)
            .map(|i| self.proportions[i])
    }
}

/// `s_i / Σ s`.
pub fn proportions(scores: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = scores.iter().filter(|s| **s > 0.0).sum();
    if !(total > 0.0) || scores.iter().any(|s| *s < 0.0 || !s.is_finite()) {
        return Err(Error::AllNonPositive);
    }
    Ok(scores.iter().map(|s| s / total).collect())
}

/// Min–max scaling for benefit criteria; tie-aware rank transform
/// `(n - rank) / (n - 1)` for cost criteria (lowest raw value ranks first).
pub fn normalize_indicators(table: &IndicatorTable) -> Result<IndicatorTable> {
    table.check_shape()?;
    let n = table.n_entities();
    if n < 2 {
        return Err(Error::LabelMismatch(format!(
            "normalisation needs at least 2 entities, got {n}"
        )));
    }
    let mut values = vec![vec![0.0; table.n_criteria()]; n];
    for (c, dir) in table.directions.iter().enumerate() {
        let col = table.column(c);
        let normalized = match dir {
            Direction::Benefit => min_max(&col).ok_or_else(|| Error::DegenerateCriterion {
                criterion: table.criteria[c].clone(),
            })?,
            Direction::Cost => cost_rank(&col),
        };
        for (row, v) in values.iter_mut().zip(normalized) {
            row[c] = v;
        }
    }
    Ok(IndicatorTable {
        entities: table.entities.clone(),
        criteria: table.criteria.clone(),
        directions: table.directions.clone(),
        values,
    })
}

fn min_max(col: &[f64]) -> Option<Vec<f64>> {
    let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if !(span > 0.0) || !span.is_finite() {
        return None;
    }
    Some(col.iter().map(|v| (v - min) / span).collect())
}

/// Ascending ranks (1 = lowest value) with ties sharing their mean rank.
pub fn mean_ranks(col: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..col.len()).collect();
    idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0.0; col.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && col[idx[end]] == col[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

fn cost_rank(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    mean_ranks(col)
        .into_iter()
        .map(|r| (n - r) / (n - 1.0))
        .collect()
}

/// Column index into `weights` for each table criterion, by label.
fn align(table: &IndicatorTable, weights: &WeightVector) -> Result<Vec<usize>> {
    if table.n_criteria() != weights.labels.len() {
        return Err(Error::LabelMismatch(format!(
            "table has {} criteria, weights have {}",
            table.n_criteria(),
            weights.labels.len()
        )));
    }
    table
        .criteria
        .iter()
        .map(|c| {
            weights
                .labels
                .iter()
                .position(|l| l == c)
                .ok_or_else(|| Error::LabelMismatch(format!("no weight for criterion '{c}'")))
        })
        .collect()
}

/// `N_i = Σ_j α_j x_ij`, with weights matched to criteria by label.
pub fn score_ahp(normalized: &IndicatorTable, weights: &WeightVector) -> Result<ScoreTable> {
    normalized.check_shape()?;
    let map = align(normalized, weights)?;
    let scores: Vec<f64> = normalized
        .values
        .iter()
        .map(|row| {
            row.iter()
                .zip(&map)
                .map(|(x, &w)| weights.weights[w] * x)
                .sum()
        })
        .collect();
    let proportions = proportions(&scores)?;
    Ok(ScoreTable {
        entities: normalized.entities.clone(),
        scores,
        proportions,
        clamped: Vec::new(),
    })
}

/// Affine factor score `β₀ + Σ_j β_j x_ij`; negative scores are clamped to 0
/// before proportioning and listed in [`ScoreTable::clamped`].
pub fn score_factor(table: &IndicatorTable, betas: &[f64]) -> Result<ScoreTable> {
    table.check_shape()?;
    if betas.len() != table.n_criteria() + 1 {
        return Err(Error::LabelMismatch(format!(
            "expected {} betas (intercept + {} criteria), got {}",
            table.n_criteria() + 1,
            table.n_criteria(),
            betas.len()
        )));
    }
    let raw: Vec<f64> = table
        .values
        .iter()
        .map(|row| betas[0] + row.iter().zip(&betas[1..]).map(|(x, b)| b * x).sum::<f64>())
        .collect();
    let mut clamped = Vec::new();
    let scores: Vec<f64> = raw
        .iter()
        .zip(&table.entities)
        .map(|(&s, e)| {
            if s < 0.0 {
                log::warn!("factor score for '{e}' is negative ({s}); clamped to 0");
                clamped.push(e.clone());
                0.0
            } else {
                s
            }
        })
        .collect();
    let proportions = proportions(&scores)?;
    Ok(ScoreTable {
        entities: table.entities.clone(),
        scores,
        proportions,
        clamped,
    })
}

/// Redistribute shares so no entity exceeds its cap. Uncapped mass is spread
/// over the remaining entities in proportion to their current shares.
pub fn apply_share_caps(props: &[f64], caps: &[Option<f64>]) -> Result<Vec<f64>> {
    let mut out = props.to_vec();
    let mut fixed = vec![false; out.len()];
    loop {
        let over: Vec<usize> = (0..out.len())
            .filter(|&i| !fixed[i] && caps[i].is_some_and(|c| out[i] > c))
            .collect();
        if over.is_empty() {
            return Ok(out);
        }
        for &i in &over {
            out[i] = caps[i].unwrap();
            fixed[i] = true;
        }
        let fixed_mass: f64 = (0..out.len()).filter(|&i| fixed[i]).map(|i| out[i]).sum();
        let free_mass: f64 = (0..out.len()).filter(|&i| !fixed[i]).map(|i| out[i]).sum();
        let remaining = 1.0 - fixed_mass;
        if free_mass <= 0.0 || remaining < 0.0 {
            return Err(Error::Config(
                "share caps cannot be satisfied (caps sum below 1)".into(),
            ));
        }
        for i in 0..out.len() {
            if !fixed[i] {
                out[i] *= remaining / free_mass;
            }
        }
    }
}

/// Inflow sensitivities for the feedback dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Change of each criterion's raw value per admitted person.
    pub gamma: BTreeMap<String, f64>,
    pub horizon: usize,
    /// Optional per-entity maximum share.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub max_share: BTreeMap<String, f64>,
}

impl FeedbackConfig {
    fn gamma_for(&self, table: &IndicatorTable) -> Result<Vec<f64>> {
        if let Some(unknown) = self.gamma.keys().find(|k| table.criterion_index(k).is_none()) {
            return Err(Error::UnknownCriterion(unknown.clone()));
        }
        Ok(table
            .criteria
            .iter()
            .map(|c| self.gamma.get(c).copied().unwrap_or(0.0))
            .collect())
    }

    fn caps_for(&self, table: &IndicatorTable) -> Result<Vec<Option<f64>>> {
        if let Some(unknown) = self.max_share.keys().find(|k| table.entity_index(k).is_none()) {
            return Err(Error::Config(format!("max_share for unknown entity '{unknown}'")));
        }
        Ok(table
            .entities
            .iter()
            .map(|e| self.max_share.get(e).copied())
            .collect())
    }
}

/// `x_ij(t+1) = x_ij(t) + F(t)·k_i(t)·γ_j`.
pub fn feedback_step(
    state: &IndicatorTable,
    inflow: f64,
    shares: &[f64],
    config: &FeedbackConfig,
) -> Result<IndicatorTable> {
    state.check_shape()?;
    if shares.len() != state.n_entities() {
        return Err(Error::LabelMismatch(format!(
            "{} shares for {} entities",
            shares.len(),
            state.n_entities()
        )));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::SharesDontSum { sum });
    }
    let gamma = config.gamma_for(state)?;
    let values = state
        .values
        .iter()
        .zip(shares)
        .map(|(row, k)| {
            row.iter()
                .zip(&gamma)
                .map(|(x, g)| x + inflow * k * g)
                .collect()
        })
        .collect();
    Ok(IndicatorTable {
        values,
        ..state.clone()
    })
}

/// Period-by-period allocation under inflow feedback: normalise, score,
/// proportion (with optional caps), then push the inflow back into the
/// raw indicators. Returns one score table per period.
pub fn simulate_feedback(
    initial: &IndicatorTable,
    inflows: &[f64],
    weights: &WeightVector,
    config: &FeedbackConfig,
) -> Result<Vec<ScoreTable>> {
    if config.horizon == 0 || config.horizon != inflows.len() {
        return Err(Error::Config(format!(
            "horizon {} does not match {} inflows",
            config.horizon,
            inflows.len()
        )));
    }
    let caps = config.caps_for(initial)?;
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(inflows.len());
    for (period, &inflow) in inflows.iter().enumerate() {
        let wrap = |e: Error| Error::Simulation {
            period: period + 1,
            source: Box::new(e),
        };
        let normalized = normalize_indicators(&state).map_err(wrap)?;
        let mut scores = score_ahp(&normalized, weights).map_err(wrap)?;
        if caps.iter().any(Option::is_some) {
            scores.proportions = apply_share_caps(&scores.proportions, &caps).map_err(wrap)?;
        }
        state = feedback_step(&state, inflow, &scores.proportions, config).map_err(wrap)?;
        out.push(scores);
    }
    Ok(out)
}
