//! Nonconformity scores, split-conformal calibration and conformity
//! discrepancies.

mod calibrator;
mod gap;
mod pava;
mod quantile;
mod scorer;
mod select;

pub use calibrator::Calibrator;
pub use gap::{
    batch_conformity_gap, conformity_gap, weighted_conformity_gap, GapBatch, GapStates, GapValue,
    WeightedGap,
};
pub use pava::{pava_fit, IsotonicFit};
pub use quantile::{conformal_quantile, conformal_rank, p_value};
pub use scorer::{
    disc_input, disc_outputs, fit_scorer, fold_index, score, weighted_score, ComponentScores,
    CrossState, ScorerState,
};
pub use select::{select_weights, select_weights_with, simplex_grid, Selection};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("{0}")]
    Invalid(String),
    #[error("class {0} has no points; Mondrian scores are undefined for it")]
    EmptyClass(usize),
    #[error("class {0} was not seen when fitting Mondrian scores")]
    UnseenClass(usize),
    #[error("significance level must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("batch size mismatch: {real} real vs {fake} generated")]
    BatchMismatch { real: usize, fake: usize },
    #[error("invalid weights {0:?}: entries must be nonnegative and sum to 1")]
    Weights([f64; 4]),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("calibrator I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibrator format: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonconformityMethod {
    Icp,
    Mondrian,
    CrossConformal,
    VennAbers,
}

impl NonconformityMethod {
    pub const ALL: [NonconformityMethod; 4] = [
        NonconformityMethod::Icp,
        NonconformityMethod::Mondrian,
        NonconformityMethod::CrossConformal,
        NonconformityMethod::VennAbers,
    ];

    /// Position of this method's weight.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NonconformityMethod::Icp => "icp",
            NonconformityMethod::Mondrian => "mondrian",
            NonconformityMethod::CrossConformal => "cross_conformal",
            NonconformityMethod::VennAbers => "venn_abers",
        }
    }
}

impl std::str::FromStr for NonconformityMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| {
                m.name() == s
                    || (s == "cross" && *m == NonconformityMethod::CrossConformal)
                    || (s == "venn" && *m == NonconformityMethod::VennAbers)
            })
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Nonnegative ensemble weights summing to one, ordered as
/// [`NonconformityMethod::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct WeightVector([f64; 4]);

impl WeightVector {
    pub fn new(w: [f64; 4]) -> Result<Self, ConformalError> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ConformalError::Weights(w));
        }
        Ok(Self(w))
    }

    pub fn uniform() -> Self {
        Self([0.25; 4])
    }

    pub fn unit(method: NonconformityMethod) -> Self {
        let mut w = [0.0; 4];
        w[method.index()] = 1.0;
        Self(w)
    }

    pub fn get(&self, method: NonconformityMethod) -> f64 {
        self.0[method.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    /// `Σ λ_i s_i`. Zero-weight terms are skipped so a unit vector reproduces
    /// its component exactly.
    pub fn combine(&self, scores: &ComponentScores) -> f64 {
        self.0
            .iter()
            .zip(scores)
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, s)| w * s)
            .sum()
    }
}

impl TryFrom<[f64; 4]> for WeightVector {
    type Error = ConformalError;

    fn try_from(w: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(w)
    }
}

impl From<WeightVector> for [f64; 4] {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_validation() {
        assert!(WeightVector::new([0.5, 0.5, 0.0, 0.0]).is_ok());
        assert!(WeightVector::new([0.5, 0.6, 0.0, 0.0]).is_err());
        assert!(WeightVector::new([1.5, -0.5, 0.0, 0.0]).is_err());
        assert!(serde_json::from_str::<WeightVector>("[0.2,0.2,0.2,0.2]").is_err());
        let w: WeightVector = serde_json::from_str("[0.25,0.25,0.25,0.25]").unwrap();
        assert_eq!(w, WeightVector::uniform());
    }

    #[test]
    fn combine_cases() {
        let icp = WeightVector::unit(NonconformityMethod::Icp);
        assert_eq!(icp.combine(&[1.7, 2.0, 3.0, 4.0]), 1.7);
        let half = WeightVector::new([0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(half.combine(&[2.0, 4.0, 0.0, 0.0]), 3.0);
        assert_eq!(WeightVector::uniform().combine(&[0.7; 4]), 0.7);
    }

    #[test]
    fn method_names_parse() {
        for m in NonconformityMethod::ALL {
            assert_eq!(m.name().parse::<NonconformityMethod>().unwrap(), m);
        }
        assert!("x".parse::<NonconformityMethod>().is_err());
    }
}
