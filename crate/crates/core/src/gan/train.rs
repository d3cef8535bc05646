use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::losses::{
    discriminator_loss, generator_input, generator_loss, DiscBatch, DiscLoss, GenBatch, GenLoss,
};
use super::{GanError, TrainConfig};
use crate::conformal::{conformal_quantile, GapStates, IsotonicFit, ScorerState};
use crate::data::LabeledDataset;
use crate::nn::{random_directions, Activation, Matrix, MlpModel};
use crate::rng::{fill_standard_normal, seeded, RngState, SeededRng};

/// Coverage level used for the running coverage monitor.
pub const MONITOR_ALPHA: f64 = 0.1;

const DISC_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;
const MAIN_STREAM: u64 = 0;
const POOL_STREAM: u64 = 1;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub t: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub r_icp: f64,
    pub c_g: f64,
    pub grad_penalty: f64,
    /// Cumulative fraction of generated samples inside the real ICP region
    /// at level `1 - MONITOR_ALPHA`.
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub generator: MlpModel,
    pub discriminator: MlpModel,
    pub log: Vec<TrainRecord>,
    /// Position of the batch-sampling stream after the last iteration.
    pub rng_state: RngState,
}

/// `b` latent rows of i.i.d. standard normals and uniform labels.
pub fn sample_latent<R: Rng + ?Sized>(
    rng: &mut R,
    b: usize,
    d_z: usize,
    n_classes: usize,
) -> (Matrix, Vec<usize>) {
    let labels = (0..b)
        .map(|_| rng.random_range(0..n_classes.max(1)))
        .collect();
    let mut z = Matrix::zeros(b, d_z);
    fill_standard_normal(rng, z.data_mut());
    (z, labels)
}

/// Freshly initialized generator and discriminator for `data_dim` features.
pub fn init_models(
    config: &TrainConfig,
    data_dim: usize,
) -> Result<(MlpModel, MlpModel), GanError> {
    let gen = MlpModel::new(
        &config.generator_dims(data_dim),
        Activation::Linear,
        config.seed,
    )?;
    let disc = MlpModel::new(
        &config.discriminator_dims(data_dim),
        Activation::Sigmoid,
        config.seed.wrapping_add(DISC_SEED_OFFSET),
    )?;
    Ok((gen, disc))
}

/// One Adam step on the discriminator; returns the loss before the step.
pub fn discriminator_step(
    gen: &MlpModel,
    disc: &mut MlpModel,
    batch: &DiscBatch,
    config: &TrainConfig,
) -> Result<DiscLoss, GanError> {
    let loss = discriminator_loss(
        gen,
        disc,
        batch,
        config.n_classes,
        config.lambda_reg,
        config.penalty_eps,
    )?;
    if !loss.total.is_finite() {
        return Err(GanError::Divergence {
            t: disc.step() as usize,
            detail: format!("discriminator loss is {}", loss.total),
        });
    }
    disc.adam_step(&loss.grads, config.eta_d)?;
    Ok(loss)
}

/// One Adam step on the generator; returns the loss before the step.
pub fn generator_step(
    gen: &mut MlpModel,
    disc: &MlpModel,
    batch: &GenBatch,
    states: Option<&GapStates>,
    config: &TrainConfig,
) -> Result<GenLoss, GanError> {
    let loss = generator_loss(
        gen,
        disc,
        batch,
        config.n_classes,
        states,
        &config.weights,
        config.mu_conform,
    )?;
    if !loss.total.is_finite() {
        return Err(GanError::Divergence {
            t: gen.step() as usize,
            detail: format!("generator loss is {}", loss.total),
        });
    }
    gen.adam_step(&loss.grads, config.eta_g)?;
    Ok(loss)
}

fn generate_from<R: Rng + ?Sized>(
    gen: &MlpModel,
    n_classes: usize,
    labels: Vec<usize>,
    rng: &mut R,
) -> Result<LabeledDataset, GanError> {
    let d_z = gen.input_dim().checked_sub(n_classes).ok_or_else(|| {
        GanError::Shape(format!(
            "generator input {} is narrower than {n_classes} classes",
            gen.input_dim()
        ))
    })?;
    let mut z = Matrix::zeros(labels.len(), d_z);
    fill_standard_normal(rng, z.data_mut());
    let x = gen.forward(&generator_input(&z, &labels, n_classes)?)?;
    Ok(LabeledDataset::new(x, labels, n_classes)?)
}

/// `n` samples from `gen`. Labels are drawn uniformly unless given.
pub fn generate(
    gen: &MlpModel,
    n_classes: usize,
    n: usize,
    labels: Option<&[usize]>,
    seed: u64,
) -> Result<LabeledDataset, GanError> {
    let mut rng = seeded(seed, MAIN_STREAM);
    let labels = match labels {
        Some(l) if l.len() != n => {
            return Err(GanError::Shape(format!(
                "{} labels for {n} samples",
                l.len()
            )));
        }
        Some(l) => {
            if let Some(&bad) = l.iter().find(|&&y| y >= n_classes) {
                return Err(GanError::Config(format!(
                    "label {bad} outside {n_classes} classes"
                )));
            }
            l.to_vec()
        }
        None => (0..n)
            .map(|_| rng.random_range(0..n_classes.max(1)))
            .collect(),
    };
    generate_from(gen, n_classes, labels, &mut rng)
}

/// `n` samples with labels cycling through the classes.
pub fn generate_balanced<R: Rng + ?Sized>(
    gen: &MlpModel,
    n_classes: usize,
    n: usize,
    rng: &mut R,
) -> Result<LabeledDataset, GanError> {
    generate_from(gen, n_classes, (0..n).map(|i| i % n_classes).collect(), rng)
}

/// Score statistics for one refit.
#[derive(Debug, Clone)]
pub struct RefitOutput {
    pub states: GapStates,
    /// ICP threshold of the real pool at level `1 - MONITOR_ALPHA`.
    pub monitor_threshold: f64,
}

/// Refits the generated-side statistics on a fresh balanced pool and the
/// Venn-Abers model of both sides on real and generated pools. The real
/// geometry in `real_state` is kept.
pub fn refit_states(
    gen: &MlpModel,
    disc: &MlpModel,
    data: &LabeledDataset,
    real_state: &ScorerState,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<RefitOutput, GanError> {
    let m = config.pool_size.min(data.len());
    let mut idx = index::sample(rng, data.len(), m).into_vec();
    idx.sort_unstable();
    let real_pool = data.subset(&idx);
    let fake_pool = generate_balanced(gen, config.n_classes, config.pool_size, rng)?;
    let venn = IsotonicFit::from_discriminator(disc, &real_pool, &fake_pool)?;
    let fake = ScorerState::fit(&fake_pool, config.k_folds, venn.clone())?;
    let mut real = real_state.clone();
    real.venn = venn;
    let mut pool_scores: Vec<f64> = real_pool
        .features()
        .iter_rows()
        .map(|x| real.icp(x))
        .collect();
    pool_scores.sort_by(f64::total_cmp);
    let monitor_threshold = conformal_quantile(&pool_scores, MONITOR_ALPHA)?;
    Ok(RefitOutput {
        states: GapStates { real, fake },
        monitor_threshold,
    })
}

fn check_data(data: &LabeledDataset, config: &TrainConfig) -> Result<(), GanError> {
    config.validate()?;
    if data.n_classes() != config.n_classes {
        return Err(GanError::Config(format!(
            "n_classes is {} but the data has {} classes",
            config.n_classes,
            data.n_classes()
        )));
    }
    if data.len() < config.batch_size {
        return Err(GanError::Config(format!(
            "batch_size {} exceeds the {} training points",
            config.batch_size,
            data.len()
        )));
    }
    if data.len() < config.k_folds {
        return Err(GanError::Config(format!(
            "k_folds {} exceeds the {} training points",
            config.k_folds,
            data.len()
        )));
    }
    Ok(())
}

/// Runs `config.iterations` alternating updates from freshly initialized
/// models.
pub fn train(data: &LabeledDataset, config: &TrainConfig) -> Result<TrainOutput, GanError> {
    check_data(data, config)?;
    let (gen, disc) = init_models(config, data.dim())?;
    train_from(gen, disc, data, config)
}

/// Runs `config.iterations` alternating updates starting from the given
/// models (and their optimizer state).
pub fn train_from(
    mut gen: MlpModel,
    mut disc: MlpModel,
    data: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainOutput, GanError> {
    check_data(data, config)?;
    let d = data.dim();
    if gen.input_dim() != config.d_z + config.n_classes
        || gen.output_dim() != d
        || disc.input_dim() != d + config.n_classes
    {
        return Err(GanError::Shape(
            "models do not match the configuration and data".into(),
        ));
    }
    let mut log = Vec::with_capacity(config.iterations);
    let mut rng = seeded(config.seed, MAIN_STREAM);
    if config.iterations == 0 {
        return Ok(TrainOutput {
            generator: gen,
            discriminator: disc,
            log,
            rng_state: RngState::capture(config.seed, &rng),
        });
    }
    let mut pool_rng = seeded(config.seed, POOL_STREAM);
    let real_state = ScorerState::fit(data, config.k_folds, IsotonicFit::default())?;
    let mut refit: Option<RefitOutput> = None;
    let mut covered = 0usize;
    let mut seen = 0usize;
    let b = config.batch_size;

    for t in 1..=config.iterations {
        let divergence = |e: GanError| match e {
            GanError::Divergence { detail, .. } => GanError::Divergence { t, detail },
            GanError::Nn(crate::nn::NnError::NonFinite(what)) => GanError::Divergence {
                t,
                detail: format!("non-finite {what}"),
            },
            other => other,
        };
        if (t - 1) % config.refit_period == 0 {
            refit = Some(refit_states(
                &gen,
                &disc,
                data,
                &real_state,
                config,
                &mut pool_rng,
            )?);
        }
        let current = refit.as_ref().expect("refit on the first iteration");

        let idx = index::sample(&mut rng, data.len(), b).into_vec();
        let real = data.features().select_rows(&idx);
        let real_labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
        let (z, fake_labels) = sample_latent(&mut rng, b, config.d_z, config.n_classes);
        let directions = random_directions(&mut rng, b, d);
        let disc_batch = DiscBatch {
            real,
            real_labels,
            z,
            fake_labels,
            directions,
        };
        let d_loss =
            discriminator_step(&gen, &mut disc, &disc_batch, config).map_err(divergence)?;

        let (z, fake_labels) = sample_latent(&mut rng, b, config.d_z, config.n_classes);
        let gen_batch = GenBatch {
            real: disc_batch.real,
            real_labels: disc_batch.real_labels,
            z,
            fake_labels,
        };
        let g_loss = generator_step(&mut gen, &disc, &gen_batch, Some(&current.states), config)
            .map_err(divergence)?;

        let fake = gen.forward(&generator_input(
            &gen_batch.z,
            &gen_batch.fake_labels,
            config.n_classes,
        )?)?;
        covered += fake
            .iter_rows()
            .filter(|x| current.states.real.icp(x) <= current.monitor_threshold)
            .count();
        seen += b;
        log.push(TrainRecord {
            t,
            loss_d: d_loss.total,
            loss_g: g_loss.total,
            r_icp: g_loss.per_method[0],
            c_g: g_loss.c_g,
            grad_penalty: d_loss.penalty,
            coverage: covered as f64 / seen as f64,
        });
    }
    Ok(TrainOutput {
        generator: gen,
        discriminator: disc,
        log,
        rng_state: RngState::capture(config.seed, &rng),
    })
}
