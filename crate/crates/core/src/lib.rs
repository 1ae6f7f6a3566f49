//! Saturation forecasting for short event-driven series (Grey Verhulst and
//! logistic models) and multi-criteria allocation scoring (AHP weights,
//! factor scores, inflow feedback), with a one-at-a-time sensitivity
//! harness.
//!
//! Batch work (sensitivity sweeps) runs on rayon when the `parallel`
//! feature is enabled, and sequentially otherwise.

pub mod ahp;
pub mod allocation;
pub mod error;
pub mod io;
pub mod logistic;
pub mod par;
pub mod sensitivity;
pub mod series;
pub mod verhulst;

pub use ahp::{build_matrix, principal_weights, Judgment, PairwiseMatrix, WeightVector};
pub use allocation::{Direction, FeedbackConfig, IndicatorTable, ScoreTable};
pub use error::{Error, Result};
pub use logistic::{fit_logistic, FitQuality, LogisticParams};
pub use par::Execution;
pub use sensitivity::{AllocationSubject, PerturbationSpec, SensitivityReport};
pub use series::TimeSeries;
pub use verhulst::{AccuracyReport, Grade, GreyVerhulstModel, SaturationResult};
