use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{conformal_quantile, p_value, ConformalError, ScorerState, WeightVector};
use crate::data::LabeledDataset;
use crate::nn::{Matrix, MlpModel};
use crate::par::Mode;

/// Fitted scores, ensemble weights and the sorted weighted calibration
/// scores at significance level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub scorer: ScorerState,
    pub weights: WeightVector,
    calib_scores: Vec<f64>,
    alpha: f64,
}

impl Calibrator {
    pub fn from_scores(
        scorer: ScorerState,
        weights: WeightVector,
        mut scores: Vec<f64>,
        alpha: f64,
    ) -> Result<Self, ConformalError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConformalError::Alpha(alpha));
        }
        if scores.is_empty() {
            return Err(ConformalError::EmptyCalibration);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(ConformalError::Invalid(
                "calibration scores must be finite".into(),
            ));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self {
            scorer,
            weights,
            calib_scores: scores,
            alpha,
        })
    }

    /// Scores the calibration set with the weighted ensemble.
    pub fn fit(
        scorer: ScorerState,
        weights: WeightVector,
        calib: &LabeledDataset,
        disc: &MlpModel,
        alpha: f64,
    ) -> Result<Self, ConformalError> {
        let rows = scorer.score_rows(calib.features(), calib.labels(), disc)?;
        let scores = rows.iter().map(|c| weights.combine(c)).collect();
        Self::from_scores(scorer, weights, scores, alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn calib_scores(&self) -> &[f64] {
        &self.calib_scores
    }

    pub fn n(&self) -> usize {
        self.calib_scores.len()
    }

    /// Threshold at the calibrator's own level.
    pub fn threshold(&self) -> f64 {
        self.threshold_at(self.alpha)
            .expect("alpha validated at construction")
    }

    pub fn threshold_at(&self, alpha: f64) -> Result<f64, ConformalError> {
        conformal_quantile(&self.calib_scores, alpha)
    }

    pub fn contains_score(&self, s: f64) -> bool {
        s <= self.threshold()
    }

    pub fn p_value_of_score(&self, s: f64) -> f64 {
        p_value(&self.calib_scores, s)
    }

    pub fn weighted_scores_with(
        &self,
        mode: Mode,
        features: &Matrix,
        labels: &[usize],
        disc: &MlpModel,
    ) -> Result<Vec<f64>, ConformalError> {
        let rows = self.scorer.score_rows_with(mode, features, labels, disc)?;
        Ok(rows.iter().map(|c| self.weights.combine(c)).collect())
    }

    pub fn weighted_scores(
        &self,
        features: &Matrix,
        labels: &[usize],
        disc: &MlpModel,
    ) -> Result<Vec<f64>, ConformalError> {
        self.weighted_scores_with(Mode::default(), features, labels, disc)
    }

    pub fn weighted_score(
        &self,
        x: &[f64],
        y: usize,
        disc: &MlpModel,
    ) -> Result<f64, ConformalError> {
        super::weighted_score(&self.scorer, &self.weights, x, y, disc)
    }

    /// Whether `(x, y)` lies in the prediction region.
    pub fn region_contains(
        &self,
        x: &[f64],
        y: usize,
        disc: &MlpModel,
    ) -> Result<bool, ConformalError> {
        Ok(self.contains_score(self.weighted_score(x, y, disc)?))
    }

    pub fn p_value(&self, x: &[f64], y: usize, disc: &MlpModel) -> Result<f64, ConformalError> {
        Ok(self.p_value_of_score(self.weighted_score(x, y, disc)?))
    }

    pub fn to_json(&self) -> Result<String, ConformalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ConformalError> {
        let raw: Self = serde_json::from_str(s)?;
        // Re-validate what the file claims.
        Self::from_scores(raw.scorer, raw.weights, raw.calib_scores, raw.alpha)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConformalError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConformalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
