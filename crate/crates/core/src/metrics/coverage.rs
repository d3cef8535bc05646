use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::conformal::Calibrator;
use crate::data::LabeledDataset;
use crate::nn::MlpModel;

/// Nominal coverage levels of the default calibration grid.
pub const DEFAULT_LEVELS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub nominal: f64,
    pub empirical: f64,
}

/// Empirical coverage at a strictly increasing list of nominal levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageGrid {
    pub rows: Vec<CoverageRow>,
}

fn sample_scores(
    calibrator: &Calibrator,
    samples: &LabeledDataset,
    disc: &MlpModel,
) -> Result<Vec<f64>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty("sample set"));
    }
    Ok(calibrator.weighted_scores(samples.features(), samples.labels(), disc)?)
}

fn fraction_within(scores: &[f64], q: f64) -> f64 {
    scores.iter().filter(|&&s| s <= q).count() as f64 / scores.len() as f64
}

pub fn coverage_report(
    calibrator: &Calibrator,
    samples: &LabeledDataset,
    disc: &MlpModel,
    levels: &[f64],
) -> Result<CoverageGrid, MetricsError> {
    if levels.is_empty() {
        return Err(MetricsError::Empty("level grid"));
    }
    if levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::Invalid(format!(
            "levels must be strictly increasing inside (0, 1), got {levels:?}"
        )));
    }
    let scores = sample_scores(calibrator, samples, disc)?;
    let rows = levels
        .iter()
        .map(|&nominal| {
            let q = calibrator.threshold_at(1.0 - nominal)?;
            Ok(CoverageRow {
                nominal,
                empirical: fraction_within(&scores, q),
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    Ok(CoverageGrid { rows })
}

/// `1 / (1 + q)` for the calibrator's own threshold; 0 for an unbounded
/// region.
pub fn efficiency(calibrator: &Calibrator) -> f64 {
    efficiency_of(calibrator.threshold())
}

pub fn efficiency_at(calibrator: &Calibrator, alpha: f64) -> Result<f64, MetricsError> {
    Ok(efficiency_of(calibrator.threshold_at(alpha)?))
}

fn efficiency_of(q: f64) -> f64 {
    if q.is_finite() {
        1.0 / (1.0 + q)
    } else {
        0.0
    }
}

/// Mean absolute gap between empirical and nominal coverage.
pub fn ece(grid: &CoverageGrid) -> Result<f64, MetricsError> {
    if grid.rows.is_empty() {
        return Err(MetricsError::Empty("coverage grid"));
    }
    Ok(grid
        .rows
        .iter()
        .map(|r| (r.empirical - r.nominal).abs())
        .sum::<f64>()
        / grid.rows.len() as f64)
}

/// Rows `(1 - efficiency, coverage)`, one per significance level.
pub fn coverage_efficiency_curve(
    calibrator: &Calibrator,
    samples: &LabeledDataset,
    disc: &MlpModel,
    alphas: &[f64],
) -> Result<Vec<[f64; 2]>, MetricsError> {
    if alphas.is_empty() {
        return Err(MetricsError::Empty("alpha list"));
    }
    let scores = sample_scores(calibrator, samples, disc)?;
    alphas
        .iter()
        .map(|&a| {
            let q = calibrator.threshold_at(a)?;
            Ok([1.0 - efficiency_of(q), fraction_within(&scores, q)])
        })
        .collect()
}
