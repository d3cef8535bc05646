use serde::{Deserialize, Serialize};

use super::GanError;
use crate::conformal::WeightVector;

/// Hyperparameters of one training run.
///
/// Every field that shapes the objective must be present in a config file;
/// only the internal knobs at the bottom have serde defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Latent dimension.
    pub d_z: usize,
    #[serde(alias = "K")]
    pub n_classes: usize,
    #[serde(alias = "B")]
    pub batch_size: usize,
    #[serde(alias = "T")]
    pub iterations: usize,
    pub eta_g: f64,
    pub eta_d: f64,
    /// Weight of the discriminator input-gradient penalty.
    pub lambda_reg: f64,
    /// Weight of the conformity penalty in the generator loss.
    pub mu_conform: f64,
    pub weights: WeightVector,
    pub k_folds: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Iterations between refits of the score statistics.
    pub refit_period: usize,
    /// Step of the directional finite difference in the gradient penalty.
    #[serde(default = "default_penalty_eps")]
    pub penalty_eps: f64,
    /// Generated (and real) samples drawn for each score refit.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
}

fn default_penalty_eps() -> f64 {
    1e-3
}

fn default_pool_size() -> usize {
    512
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_z: 8,
            n_classes: 3,
            batch_size: 64,
            iterations: 3000,
            eta_g: 2e-4,
            eta_d: 2e-4,
            lambda_reg: 0.1,
            mu_conform: 1.0,
            weights: WeightVector::uniform(),
            k_folds: 5,
            hidden: vec![64, 64],
            seed: 0,
            refit_period: 50,
            penalty_eps: default_penalty_eps(),
            pool_size: default_pool_size(),
        }
    }
}

impl TrainConfig {
    /// Plain conditional GAN: no conformity penalty, no gradient penalty.
    pub fn baseline(mut self) -> Self {
        self.mu_conform = 0.0;
        self.lambda_reg = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let counts = [
            ("d_z", self.d_z),
            ("n_classes", self.n_classes),
            ("batch_size", self.batch_size),
            ("refit_period", self.refit_period),
            ("pool_size", self.pool_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(GanError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.k_folds < 2 {
            return Err(GanError::Config("k_folds must be at least 2".into()));
        }
        if self.pool_size < self.k_folds.max(self.n_classes) {
            return Err(GanError::Config(
                "pool_size must cover k_folds and every class".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(GanError::Config("hidden sizes must be positive".into()));
        }
        for (name, v) in [("eta_g", self.eta_g), ("eta_d", self.eta_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GanError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("lambda_reg", self.lambda_reg),
            ("mu_conform", self.mu_conform),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GanError::Config(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(self.penalty_eps > 0.0 && self.penalty_eps.is_finite()) {
            return Err(GanError::Config("penalty_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn generator_dims(&self, data_dim: usize) -> Vec<usize> {
        let mut dims = vec![self.d_z + self.n_classes];
        dims.extend(&self.hidden);
        dims.push(data_dim);
        dims
    }

    pub fn discriminator_dims(&self, data_dim: usize) -> Vec<usize> {
        let mut dims = vec![data_dim + self.n_classes];
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }
}
