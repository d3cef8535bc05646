//! Labeled tabular datasets: synthesis, standardization, splitting and CSV.

mod csv_io;
mod mixture;
mod split;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use mixture::{make_gaussian_mixture, MixtureSpec};
pub use split::{split, Splits};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Matrix, NnError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{0}")]
    Invalid(String),
    #[error("CSV has no header row")]
    MissingHeader,
    #[error("CSV header has no \"label\" column")]
    MissingLabel,
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column \"{column}\": cannot parse {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per column. A column whose
    /// values are all identical gets std 1 so it maps to zeros.
    pub fn fit(features: &Matrix) -> Result<Self, DataError> {
        let (n, d) = features.shape();
        if n == 0 {
            return Err(DataError::Invalid(
                "cannot standardize an empty dataset".into(),
            ));
        }
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        for j in 0..d {
            let first = features.get(0, j);
            if features.iter_rows().all(|r| r[j] == first) {
                mean[j] = first;
                continue;
            }
            let m = features.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = features
                .iter_rows()
                .map(|r| (r[j] - m).powi(2))
                .sum::<f64>()
                / n as f64;
            mean[j] = m;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix, DataError> {
        self.check(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, features: &Matrix) -> Result<Matrix, DataError> {
        self.check(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check(&self, features: &Matrix) -> Result<(), DataError> {
        if features.cols() != self.dim() {
            return Err(DataError::Invalid(format!(
                "standardizer has {} features, data has {}",
                self.dim(),
                features.cols()
            )));
        }
        Ok(())
    }
}

/// Feature matrix with integer class labels `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
    standardizer: Option<Standardizer>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self, DataError> {
        if labels.len() != features.rows() {
            return Err(DataError::Invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(DataError::Invalid(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        if !features.is_finite() {
            return Err(DataError::Invalid(
                "features contain non-finite values".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            standardizer: None,
        })
    }

    pub fn empty(dim: usize, n_classes: usize) -> Self {
        Self {
            features: Matrix::zeros(0, dim),
            labels: Vec::new(),
            n_classes,
            standardizer: None,
        }
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn point(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `idx`, in that order. Carries the standardizer along.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            standardizer: self.standardizer.clone(),
        }
    }

    /// Fits a [`Standardizer`] on this data and applies it.
    pub fn standardize(&self) -> Result<Self, DataError> {
        let st = Standardizer::fit(&self.features)?;
        self.standardize_with(&st)
    }

    /// Applies an existing standardizer (e.g. one fitted on training data).
    pub fn standardize_with(&self, st: &Standardizer) -> Result<Self, DataError> {
        Ok(Self {
            features: st.apply(&self.features)?,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            standardizer: Some(st.clone()),
        })
    }

    /// Undoes the recorded standardization; data without one is returned as is.
    pub fn unstandardize(&self) -> Result<Self, DataError> {
        match &self.standardizer {
            None => Ok(self.clone()),
            Some(st) => Ok(Self {
                features: st.invert(&self.features)?,
                labels: self.labels.clone(),
                n_classes: self.n_classes,
                standardizer: None,
            }),
        }
    }

    pub fn with_standardizer(mut self, st: Option<Standardizer>) -> Self {
        self.standardizer = st;
        self
    }

    pub fn with_n_classes(mut self, n_classes: usize) -> Result<Self, DataError> {
        if self.labels.iter().any(|&y| y >= n_classes) {
            return Err(DataError::Invalid(format!(
                "labels exceed {n_classes} classes"
            )));
        }
        self.n_classes = n_classes;
        Ok(self)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self, DataError> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(
            self.features.vstack(&other.features)?,
            labels,
            self.n_classes.max(other.n_classes),
        )
    }
}
