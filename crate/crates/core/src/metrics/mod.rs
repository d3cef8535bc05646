//! Validity, calibration and fidelity metrics, plus the curve tables
//! behind the evaluation figures.

mod coverage;
mod density;
mod fidelity;
mod knn;
mod report;

pub use coverage::{
    coverage_efficiency_curve, coverage_report, ece, efficiency, efficiency_at, CoverageGrid,
    CoverageRow, DEFAULT_LEVELS,
};
pub use density::{spearman, width_vs_density, width_vs_density_with, WidthDensity};
pub use fidelity::{ks_mean, ks_statistic, wasserstein_1d, wasserstein_mean};
pub use knn::{downstream_accuracy, downstream_accuracy_with, knn_predict, DOWNSTREAM_K};
pub use report::{CurveTable, MetricsReport, CURVE_ALPHAS};

use thiserror::Error;

use crate::conformal::ConformalError;
use crate::data::DataError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("dimension mismatch: real data has {real} features, synthetic data has {synth}")]
    DimensionMismatch { real: usize, synth: usize },
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("curve CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("report format: {0}")]
    Json(#[from] serde_json::Error),
}
