//! Ensemble-weight selection by fine-tuning the models once per candidate.

use serde::{Deserialize, Serialize};

use super::{generate, train_from, GanError, TrainConfig};
use crate::conformal::{fit_scorer, select_weights, Calibrator, Selection, WeightVector};
use crate::data::LabeledDataset;
use crate::metrics::{coverage_report, ece, DEFAULT_LEVELS};
use crate::nn::MlpModel;
use crate::par::{self, Mode};

/// Validation criterion minimized over the candidate weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    /// Monte-Carlo `E‖x − G(z, y)‖²` over the validation points.
    SquaredError,
    /// Coverage-calibration error of generated samples against a
    /// calibrator fitted on real data.
    Ece,
}

/// Significance level of the calibrator built for the ECE criterion.
const ECE_ALPHA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub selection: Selection,
    pub criterion: SelectionCriterion,
}

fn squared_error(gen: &MlpModel, val: &LabeledDataset, seed: u64) -> Result<f64, GanError> {
    let fake = generate(gen, val.n_classes(), val.len(), Some(val.labels()), seed)?;
    let total: f64 = val
        .features()
        .iter_rows()
        .zip(fake.features().iter_rows())
        .map(|(x, g)| x.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / val.len() as f64)
}

fn ece_criterion(
    gen: &MlpModel,
    disc: &MlpModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    weights: WeightVector,
    config: &TrainConfig,
) -> Result<f64, GanError> {
    let pool = generate(
        gen,
        config.n_classes,
        config.pool_size,
        None,
        config.seed.wrapping_add(2),
    )?;
    let scorer = fit_scorer(train, &pool, disc, config.k_folds)?;
    let calibrator = Calibrator::fit(scorer, weights, val, disc, ECE_ALPHA)?;
    let samples = generate(
        gen,
        config.n_classes,
        val.len(),
        Some(val.labels()),
        config.seed.wrapping_add(3),
    )?;
    Ok(ece(&coverage_report(
        &calibrator,
        &samples,
        disc,
        &DEFAULT_LEVELS,
    )?)?)
}

/// Fine-tunes copies of `gen`/`disc` for `finetune_iters` iterations with
/// each candidate weight vector and returns the candidate minimizing the
/// chosen validation criterion. Every candidate sees the same seeds.
#[allow(clippy::too_many_arguments)]
pub fn finetune_select(
    mode: Mode,
    gen: &MlpModel,
    disc: &MlpModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainConfig,
    candidates: &[WeightVector],
    criterion: SelectionCriterion,
    finetune_iters: usize,
) -> Result<SelectionOutcome, GanError> {
    if val.is_empty() {
        return Err(GanError::Config("validation set is empty".into()));
    }
    let values = par::map_slice(mode, candidates, |&weights| -> Result<f64, GanError> {
        let cfg = TrainConfig {
            weights,
            iterations: finetune_iters,
            seed: config.seed.wrapping_add(1),
            ..config.clone()
        };
        let tuned = train_from(gen.clone(), disc.clone(), train, &cfg)?;
        match criterion {
            SelectionCriterion::SquaredError => squared_error(&tuned.generator, val, cfg.seed),
            SelectionCriterion::Ece => ece_criterion(
                &tuned.generator,
                &tuned.discriminator,
                train,
                val,
                weights,
                &cfg,
            ),
        }
    });
    let values = values.into_iter().collect::<Result<Vec<f64>, GanError>>()?;
    let selection = select_weights(candidates, |i, _| values[i])?;
    Ok(SelectionOutcome {
        selection,
        criterion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{simplex_grid, NonconformityMethod};
    use crate::data::{make_gaussian_mixture, MixtureSpec};
    use crate::gan::init_models;

    fn setup() -> (LabeledDataset, LabeledDataset, TrainConfig) {
        let d = make_gaussian_mixture(&MixtureSpec::default_mixture(260, 5))
            .unwrap()
            .standardize()
            .unwrap();
        let train = d.subset(&(0..200).collect::<Vec<_>>());
        let val = d.subset(&(200..260).collect::<Vec<_>>());
        let cfg = TrainConfig {
            batch_size: 16,
            hidden: vec![8],
            refit_period: 5,
            pool_size: 64,
            ..TrainConfig::default()
        };
        (train, val, cfg)
    }

    #[test]
    fn single_candidate_is_forced() {
        let (train, val, cfg) = setup();
        let (g, d) = init_models(&cfg, 2).unwrap();
        let only = [WeightVector::unit(NonconformityMethod::Icp)];
        for criterion in [SelectionCriterion::SquaredError, SelectionCriterion::Ece] {
            let out = finetune_select(
                Mode::Sequential,
                &g,
                &d,
                &train,
                &val,
                &cfg,
                &only,
                criterion,
                3,
            )
            .unwrap();
            assert_eq!(out.selection.best, only[0]);
        }
    }

    #[test]
    fn picks_the_exhaustive_argmin() {
        let (train, val, cfg) = setup();
        let (g, d) = init_models(&cfg, 2).unwrap();
        let grid = simplex_grid(4);
        let candidates = [grid[3], grid[17], grid[34]];
        let out = finetune_select(
            Mode::Parallel,
            &g,
            &d,
            &train,
            &val,
            &cfg,
            &candidates,
            SelectionCriterion::SquaredError,
            5,
        )
        .unwrap();
        let mut best = 0;
        for (i, w) in candidates.iter().enumerate() {
            let c = TrainConfig {
                weights: *w,
                iterations: 5,
                seed: cfg.seed + 1,
                ..cfg.clone()
            };
            let tuned = train_from(g.clone(), d.clone(), &train, &c).unwrap();
            let v = squared_error(&tuned.generator, &val, c.seed).unwrap();
            assert_eq!(v, out.selection.criteria[i]);
            if v < out.selection.criteria[best] {
                best = i;
            }
        }
        assert_eq!(out.selection.best_index, best);
    }

    #[test]
    fn zero_conformity_weight_ties_to_first() {
        let (train, val, mut cfg) = setup();
        cfg.mu_conform = 0.0;
        let (g, d) = init_models(&cfg, 2).unwrap();
        let grid = simplex_grid(4);
        let out = finetune_select(
            Mode::Sequential,
            &g,
            &d,
            &train,
            &val,
            &cfg,
            &grid[..4],
            SelectionCriterion::SquaredError,
            4,
        )
        .unwrap();
        assert!(out.selection.criteria.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.selection.best_index, 0);
    }
}
