//! Series primitives shared by both forecast models.
//!
//! The raw observations play the accumulated role: the Verhulst model works
//! on their first differences and on the neighbor means of consecutive
//! observations. Storage is 0-based; the differenced and neighbor-mean
//! series are indexed `k = 2..=n` in messages and docs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum length for fitting either forecast model.
pub const MIN_FIT_POINTS: usize = 4;

/// Ordered observations, one per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    /// Period labels (e.g. `2015-01`). Empty means "unlabelled".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub periods: Vec<String>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            periods: Vec::new(),
        }
    }

    /// Labels must be empty or match `values` in length.
    pub fn with_periods(values: Vec<f64>, periods: Vec<String>) -> Result<Self> {
        if !periods.is_empty() && periods.len() != values.len() {
            return Err(Error::LabelMismatch(format!(
                "{} period labels for {} values",
                periods.len(),
                values.len()
            )));
        }
        Ok(Self { values, periods })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Label of the first period, or `"1"` when unlabelled.
    pub fn t0_label(&self) -> &str {
        self.periods.first().map(String::as_str).unwrap_or("1")
    }

    /// Label of period `idx` (0-based), falling back to its 1-based number.
    pub fn period_label(&self, idx: usize) -> String {
        self.periods
            .get(idx)
            .cloned()
            .unwrap_or_else(|| (idx + 1).to_string())
    }

    pub fn require_len(&self, required: usize) -> Result<()> {
        if self.len() < required {
            return Err(Error::SeriesTooShort {
                required,
                actual: self.len(),
            });
        }
        Ok(())
    }

    /// Every value must be finite and strictly positive.
    pub fn require_positive(&self) -> Result<()> {
        match self
            .values
            .iter()
            .position(|v| !(v.is_finite() && *v > 0.0))
        {
            Some(idx) => Err(Error::NonPositiveData {
                k: idx + 1,
                value: self.values[idx],
            }),
            None => Ok(()),
        }
    }

    /// Series with period `idx` (0-based) dropped; later periods move up.
    pub fn without(&self, idx: usize) -> TimeSeries {
        let mut values = self.values.clone();
        values.remove(idx);
        let mut periods = self.periods.clone();
        if !periods.is_empty() {
            periods.remove(idx);
        }
        TimeSeries { values, periods }
    }

    pub fn scaled(&self, factor: f64) -> TimeSeries {
        TimeSeries {
            values: self.values.iter().map(|v| v * factor).collect(),
            periods: self.periods.clone(),
        }
    }
}

/// First differences `x(k) - x(k-1)` for `k = 2..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedSeries(pub Vec<f64>);

/// Neighbor means `(x(k) + x(k-1)) / 2` for `k = 2..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMeanSeries(pub Vec<f64>);

impl DifferencedSeries {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl NeighborMeanSeries {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn difference(series: &TimeSeries) -> Result<DifferencedSeries> {
    series.require_len(2)?;
    Ok(DifferencedSeries(
        series.values.windows(2).map(|w| w[1] - w[0]).collect(),
    ))
}

/// Inverse of [`difference`]: running sum of `diffs` starting at `first`.
///
/// Reproduces the original series bitwise whenever every partial sum is
/// exactly representable (e.g. integer counts below 2^53).
pub fn cumulate(diffs: &DifferencedSeries, first: f64) -> TimeSeries {
    let mut values = Vec::with_capacity(diffs.0.len() + 1);
    let mut acc = first;
    values.push(acc);
    for d in &diffs.0 {
        acc += d;
        values.push(acc);
    }
    TimeSeries::new(values)
}

pub fn neighbor_mean(series: &TimeSeries) -> Result<NeighborMeanSeries> {
    series.require_len(2)?;
    Ok(NeighborMeanSeries(
        series
            .values
            .windows(2)
            .map(|w| (w[1] + w[0]) / 2.0)
            .collect(),
    ))
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec())
    }

    #[test]
    fn difference_examples() {
        assert!(matches!(
            difference(&ts(&[5.0])),
            Err(Error::SeriesTooShort {
                required: 2,
                actual: 1
            })
        ));
        assert_eq!(difference(&ts(&[4.2, 4.2, 4.2])).unwrap().0, vec![0.0, 0.0]);
        assert_eq!(
            difference(&ts(&[1.0, 3.0, 6.0, 10.0])).unwrap().0,
            vec![2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn cumulate_examples() {
        assert_eq!(cumulate(&DifferencedSeries(vec![]), 7.0).values, vec![7.0]);
        assert_eq!(
            cumulate(&DifferencedSeries(vec![2.0, 3.0, 4.0]), 1.0).values,
            vec![1.0, 3.0, 6.0, 10.0]
        );
        assert_eq!(
            cumulate(&DifferencedSeries(vec![0.0, 0.0]), 5.0).values,
            vec![5.0, 5.0, 5.0]
        );
    }

    #[test]
    fn neighbor_mean_examples() {
        assert_eq!(neighbor_mean(&ts(&[3.5, 3.5])).unwrap().0, vec![3.5]);
        assert_eq!(neighbor_mean(&ts(&[1.0, 3.0, 6.0])).unwrap().0, vec![2.0, 4.5]);
        assert_eq!(
            neighbor_mean(&ts(&[0.5, 1.5, 2.5, 3.5])).unwrap().0,
            vec![1.0, 2.0, 3.0]
        );
        assert!(neighbor_mean(&ts(&[1.0])).is_err());
    }

    #[test]
    fn positivity_reports_one_based_period() {
        let err = ts(&[1.0, 2.0, -3.0, 4.0]).require_positive().unwrap_err();
        assert_eq!(err, Error::NonPositiveData { k: 3, value: -3.0 });
    }

    #[test]
    fn without_renumbers() {
        let s = TimeSeries::with_periods(
            vec![1.0, 2.0, 3.0],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let r = s.without(1);
        assert_eq!(r.values, vec![1.0, 3.0]);
        assert_eq!(r.periods, vec!["a".to_string(), "c".to_string()]);
    }

    #[test]
    fn population_std_divides_by_n() {
        assert!((population_std(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn roundtrip_on_integer_counts(v in prop::collection::vec(1u32..2_000_000_000, 2..40)) {
            let s = TimeSeries::new(v.iter().map(|&x| x as f64).collect());
            let back = cumulate(&difference(&s).unwrap(), s.values[0]);
            prop_assert_eq!(back.values, s.values);
        }

        #[test]
        fn length_contracts(v in prop::collection::vec(0.1f64..1e6, 2..40)) {
            let s = TimeSeries::new(v);
            prop_assert_eq!(difference(&s).unwrap().0.len(), s.len() - 1);
            prop_assert_eq!(neighbor_mean(&s).unwrap().0.len(), s.len() - 1);
        }

        #[test]
        fn neighbor_mean_is_between_sources(v in prop::collection::vec(0.1f64..1e6, 2..40)) {
            let s = TimeSeries::new(v);
            for (k, m) in neighbor_mean(&s).unwrap().0.iter().enumerate() {
                let (lo, hi) = (s.values[k].min(s.values[k + 1]), s.values[k].max(s.values[k + 1]));
                prop_assert!(*m >= lo && *m <= hi);
            }
        }

        #[test]
        fn difference_is_linear(v in prop::collection::vec(0.1f64..1e6, 2..40), alpha in 0.01f64..100.0) {
            let s = TimeSeries::new(v);
            let lhs = difference(&s.scaled(alpha)).unwrap();
            let rhs = difference(&s).unwrap();
            let scale = s.values.iter().fold(0.0f64, |m, x| m.max(x.abs())) * alpha;
            for (a, b) in lhs.0.iter().zip(&rhs.0) {
                prop_assert!((a - alpha * b).abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }
}
