//! The four nonconformity scores and their fitted reference statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConformalError, IsotonicFit, NonconformityMethod, WeightVector};
use crate::data::LabeledDataset;
use crate::nn::{one_hot, Matrix, MlpModel};
use crate::par::{self, Mode};

/// Per-fold statistics for the cross-conformal score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossState {
    pub k: usize,
    /// Fold index of every point the state was fitted on.
    pub fold_of: Vec<usize>,
    /// Mean of all fitted points outside fold `j`.
    pub complement_means: Vec<Vec<f64>>,
}

/// Reference statistics for all four scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerState {
    pub icp_mean: Vec<f64>,
    pub mondrian_means: BTreeMap<usize, Vec<f64>>,
    pub cross: CrossState,
    pub venn: IsotonicFit,
}

/// Scores of one point under every method, indexed by [`NonconformityMethod::index`].
pub type ComponentScores = [f64; 4];

pub(crate) fn distance(x: &[f64], mu: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn mean_of(rows: impl Iterator<Item = usize>, features: &Matrix) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; features.cols()];
    let mut n = 0usize;
    for i in rows {
        for (s, v) in sum.iter_mut().zip(features.row(i)) {
            *s += v;
        }
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Fold of point `i` out of `n` for `k` contiguous, balanced folds.
pub fn fold_index(i: usize, n: usize, k: usize) -> usize {
    i * k / n
}

/// Discriminator input `[x | one_hot(y)]`, with the class count implied by
/// the discriminator's input width.
pub fn disc_input(
    features: &Matrix,
    labels: &[usize],
    disc: &MlpModel,
) -> Result<Matrix, ConformalError> {
    let k = disc
        .input_dim()
        .checked_sub(features.cols())
        .ok_or_else(|| {
            ConformalError::Invalid(format!(
                "discriminator takes {} inputs, data has {} features",
                disc.input_dim(),
                features.cols()
            ))
        })?;
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(ConformalError::Invalid(format!(
            "label {bad} outside the discriminator's {k} classes"
        )));
    }
    Ok(features.hstack(&one_hot(labels, k))?)
}

/// Discriminator outputs for labeled rows.
pub fn disc_outputs(
    features: &Matrix,
    labels: &[usize],
    disc: &MlpModel,
) -> Result<Vec<f64>, ConformalError> {
    Ok(disc
        .forward(&disc_input(features, labels, disc)?)?
        .into_data())
}

impl IsotonicFit {
    /// Regresses the real (1) / generated (0) indicator on discriminator
    /// output over the pooled samples.
    pub fn from_discriminator(
        disc: &MlpModel,
        real: &LabeledDataset,
        generated: &LabeledDataset,
    ) -> Result<Self, ConformalError> {
        let mut xs = disc_outputs(real.features(), real.labels(), disc)?;
        xs.extend(disc_outputs(
            generated.features(),
            generated.labels(),
            disc,
        )?);
        let ys: Vec<f64> = (0..xs.len())
            .map(|i| if i < real.len() { 1.0 } else { 0.0 })
            .collect();
        Self::fit_unsorted(&xs, &ys)
    }
}

impl ScorerState {
    /// Fits the geometric statistics on `data` and attaches an existing
    /// isotonic model for the Venn-Abers score. Folds are contiguous blocks
    /// of `data` in its current row order.
    pub fn fit(data: &LabeledDataset, k: usize, venn: IsotonicFit) -> Result<Self, ConformalError> {
        let n = data.len();
        if n == 0 {
            return Err(ConformalError::Invalid(
                "cannot fit scores on an empty dataset".into(),
            ));
        }
        if k < 2 {
            return Err(ConformalError::Invalid(format!(
                "cross-conformal needs k >= 2 folds, got {k}"
            )));
        }
        if k > n {
            return Err(ConformalError::Invalid(format!(
                "{k} folds for only {n} points"
            )));
        }
        let features = data.features();
        let icp_mean = mean_of(0..n, features).expect("nonempty");
        let mut mondrian_means = BTreeMap::new();
        for class in 0..data.n_classes() {
            let mean = mean_of((0..n).filter(|&i| data.labels()[i] == class), features)
                .ok_or(ConformalError::EmptyClass(class))?;
            mondrian_means.insert(class, mean);
        }
        let fold_of: Vec<usize> = (0..n).map(|i| fold_index(i, n, k)).collect();
        let complement_means = (0..k)
            .map(|j| {
                mean_of((0..n).filter(|&i| fold_of[i] != j), features)
                    .expect("k >= 2 leaves points outside each fold")
            })
            .collect();
        Ok(Self {
            icp_mean,
            mondrian_means,
            cross: CrossState {
                k,
                fold_of,
                complement_means,
            },
            venn,
        })
    }

    pub fn dim(&self) -> usize {
        self.icp_mean.len()
    }

    pub fn icp(&self, x: &[f64]) -> f64 {
        distance(x, &self.icp_mean)
    }

    pub fn mondrian(&self, x: &[f64], y: usize) -> Result<f64, ConformalError> {
        self.mondrian_means
            .get(&y)
            .map(|mu| distance(x, mu))
            .ok_or(ConformalError::UnseenClass(y))
    }

    /// Cross-conformal score of a point outside the fitted partition: the
    /// mean distance to the `k` complement means, divided by `k`.
    pub fn cross(&self, x: &[f64]) -> f64 {
        let k = self.cross.k as f64;
        self.cross
            .complement_means
            .iter()
            .map(|mu| distance(x, mu))
            .sum::<f64>()
            / (k * k)
    }

    /// Cross-conformal score of fitted point `index` using only its own fold.
    pub fn cross_in_sample(&self, x: &[f64], index: usize) -> Result<f64, ConformalError> {
        let fold = *self.cross.fold_of.get(index).ok_or_else(|| {
            ConformalError::Invalid(format!("point {index} is not in the fitted partition"))
        })?;
        Ok(distance(x, &self.cross.complement_means[fold]) / self.cross.k as f64)
    }

    /// Venn-Abers residual `|1 − f(p)|` for discriminator output `p`; generated
    /// samples are scored for conformity to the real class.
    pub fn venn(&self, disc_output: f64) -> f64 {
        (1.0 - self.venn.eval(disc_output)).abs()
    }

    /// All four scores of one point given its discriminator output.
    pub fn components(
        &self,
        x: &[f64],
        y: usize,
        disc_output: f64,
    ) -> Result<ComponentScores, ConformalError> {
        Ok([
            self.icp(x),
            self.mondrian(x, y)?,
            self.cross(x),
            self.venn(disc_output),
        ])
    }

    /// Component scores for every row, evaluating the discriminator once per
    /// chunk of rows.
    pub fn score_rows_with(
        &self,
        mode: Mode,
        features: &Matrix,
        labels: &[usize],
        disc: &MlpModel,
    ) -> Result<Vec<ComponentScores>, ConformalError> {
        const CHUNK: usize = 256;
        if labels.len() != features.rows() {
            return Err(ConformalError::Invalid(
                "labels and rows differ in length".into(),
            ));
        }
        let n = features.rows();
        let n_chunks = n.div_ceil(CHUNK);
        let chunks = par::map_range(
            mode,
            n_chunks,
            |c| -> Result<Vec<ComponentScores>, ConformalError> {
                let rows: Vec<usize> = (c * CHUNK..((c + 1) * CHUNK).min(n)).collect();
                let sub = features.select_rows(&rows);
                let sub_labels: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
                let outs = disc_outputs(&sub, &sub_labels, disc)?;
                rows.iter()
                    .enumerate()
                    .map(|(r, &i)| self.components(features.row(i), labels[i], outs[r]))
                    .collect()
            },
        );
        let mut all = Vec::with_capacity(n);
        for chunk in chunks {
            all.extend(chunk?);
        }
        Ok(all)
    }

    pub fn score_rows(
        &self,
        features: &Matrix,
        labels: &[usize],
        disc: &MlpModel,
    ) -> Result<Vec<ComponentScores>, ConformalError> {
        self.score_rows_with(Mode::default(), features, labels, disc)
    }
}

/// Single-point score under `method`.
pub fn score(
    method: NonconformityMethod,
    state: &ScorerState,
    x: &[f64],
    y: usize,
    disc: &MlpModel,
) -> Result<f64, ConformalError> {
    let s = match method {
        NonconformityMethod::Icp => state.icp(x),
        NonconformityMethod::Mondrian => state.mondrian(x, y)?,
        NonconformityMethod::CrossConformal => state.cross(x),
        NonconformityMethod::VennAbers => {
            let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
            state.venn(disc_outputs(&xm, &[y], disc)?[0])
        }
    };
    Ok(s)
}

/// `Σ λ_i s_i(x, y)`.
pub fn weighted_score(
    state: &ScorerState,
    weights: &WeightVector,
    x: &[f64],
    y: usize,
    disc: &MlpModel,
) -> Result<f64, ConformalError> {
    let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let p = disc_outputs(&xm, &[y], disc)?[0];
    Ok(weights.combine(&state.components(x, y, p)?))
}

/// Fits all four score states: geometry on `data`, the isotonic model on
/// `data` (real) pooled with `generated`.
pub fn fit_scorer(
    data: &LabeledDataset,
    generated: &LabeledDataset,
    disc: &MlpModel,
    k: usize,
) -> Result<ScorerState, ConformalError> {
    let venn = IsotonicFit::from_discriminator(disc, data, generated)?;
    ScorerState::fit(data, k, venn)
}
