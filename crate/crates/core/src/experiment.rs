//! Paired baseline-versus-conformal runs on the default Gaussian mixture.
//!
//! Each seed draws a fresh mixture, splits it into train / calibration /
//! validation / test, trains the plain conditional GAN and the
//! conformally regularized one from identical seeds, and scores both.

use serde::{Deserialize, Serialize};

use crate::conformal::{fit_scorer, Calibrator, WeightVector};
use crate::data::{make_gaussian_mixture, split, MixtureSpec, Splits};
use crate::gan::{generate, train, GanError, TrainConfig, TrainOutput, TrainRecord};
use crate::metrics::{
    coverage_report, downstream_accuracy, ece, ks_mean, wasserstein_mean, DEFAULT_LEVELS,
};
use crate::par::{self, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Mixture size drawn per seed.
    pub n_points: usize,
    /// Train / calibration / validation / test fractions.
    pub split: [f64; 4],
    /// Generated samples scored per model.
    pub n_generated: usize,
    pub alpha: f64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_points: 6000,
            split: [0.5, 1.0 / 12.0, 1.0 / 12.0, 1.0 / 3.0],
            n_generated: 2000,
            alpha: 0.1,
            train: TrainConfig::default(),
        }
    }
}

/// Scores of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub downstream_accuracy: f64,
    pub ks_mean: f64,
    pub wasserstein_mean: f64,
    /// Coverage-calibration error of generated samples under a calibrator
    /// fitted and calibrated on real data.
    pub ece: f64,
    /// Mean logged ICP discrepancy over the first and last tenth of training.
    pub r_icp_first: f64,
    pub r_icp_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub baseline: ModelScores,
    pub conformal: ModelScores,
}

/// Standardized splits of a fresh default mixture; the standardizer is fit
/// on the training piece.
pub fn prepare_splits(n_points: usize, fractions: [f64; 4], seed: u64) -> Result<Splits, GanError> {
    let raw = make_gaussian_mixture(&MixtureSpec::default_mixture(n_points, seed))?;
    let s = split(&raw, fractions, seed)?;
    let train = s.train.standardize()?;
    let st = train.standardizer().expect("standardized").clone();
    Ok(Splits {
        calib: s.calib.standardize_with(&st)?,
        val: s.val.standardize_with(&st)?,
        test: s.test.standardize_with(&st)?,
        train,
    })
}

/// Mean of `r_icp` over the first and over the last `ceil(len / 10)`
/// records.
pub fn r_icp_trend(log: &[TrainRecord]) -> (f64, f64) {
    if log.is_empty() {
        return (0.0, 0.0);
    }
    let m = log.len().div_ceil(10);
    let mean = |rs: &[TrainRecord]| rs.iter().map(|r| r.r_icp).sum::<f64>() / rs.len() as f64;
    (mean(&log[..m]), mean(&log[log.len() - m..]))
}

/// Scores a trained model against the held-out real pieces.
pub fn score_model(
    out: &TrainOutput,
    splits: &Splits,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ModelScores, GanError> {
    let k = cfg.train.n_classes;
    let synth = generate(
        &out.generator,
        k,
        cfg.n_generated,
        None,
        seed.wrapping_add(1000),
    )?;
    let pool = generate(
        &out.generator,
        k,
        cfg.train.pool_size,
        None,
        seed.wrapping_add(2000),
    )?;
    let scorer = fit_scorer(&splits.train, &pool, &out.discriminator, cfg.train.k_folds)?;
    let calibrator = Calibrator::fit(
        scorer,
        WeightVector::uniform(),
        &splits.calib,
        &out.discriminator,
        cfg.alpha,
    )?;
    let grid = coverage_report(&calibrator, &synth, &out.discriminator, &DEFAULT_LEVELS)?;
    let (r_icp_first, r_icp_last) = r_icp_trend(&out.log);
    Ok(ModelScores {
        downstream_accuracy: downstream_accuracy(&synth, &splits.test)?,
        ks_mean: ks_mean(splits.test.features(), synth.features())?,
        wasserstein_mean: wasserstein_mean(splits.test.features(), synth.features())?,
        ece: ece(&grid)?,
        r_icp_first,
        r_icp_last,
    })
}

/// Trains and scores the baseline and the conformal model for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult, GanError> {
    let splits = prepare_splits(cfg.n_points, cfg.split, seed)?;
    let conformal_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let baseline_cfg = conformal_cfg.clone().baseline();
    let baseline = score_model(&train(&splits.train, &baseline_cfg)?, &splits, cfg, seed)?;
    let conformal = score_model(&train(&splits.train, &conformal_cfg)?, &splits, cfg, seed)?;
    Ok(SeedResult {
        seed,
        baseline,
        conformal,
    })
}

pub fn run_seeds(
    mode: Mode,
    cfg: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<SeedResult>, GanError> {
    par::map_slice(mode, seeds, |&s| run_seed(cfg, s))
        .into_iter()
        .collect()
}
