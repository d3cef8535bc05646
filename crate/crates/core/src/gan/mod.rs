//! Conditional GAN training with a conformity penalty on the generator.

mod config;
mod losses;
mod select;
mod train;

pub use config::TrainConfig;
pub use losses::{
    discriminator_loss, generator_loss, DiscBatch, DiscLoss, GenBatch, GenLoss, LOG_FLOOR,
};
pub use select::{finetune_select, SelectionCriterion, SelectionOutcome};
pub use train::{
    discriminator_step, generate, generate_balanced, generator_step, init_models, refit_states,
    sample_latent, train, train_from, RefitOutput, TrainOutput, TrainRecord, MONITOR_ALPHA,
};

use thiserror::Error;

use crate::conformal::ConformalError;
use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at iteration {t}: {detail}")]
    Divergence { t: usize, detail: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
