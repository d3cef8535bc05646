//! Finite-difference checks of every analytic gradient in the crate.
//!
//! Each comparison uses a central difference. A coordinate where the
//! loss has a kink within one step (abs, leaky ReLU, isotonic knots) shows
//! up as disagreeing one-sided differences; there the analytic value must
//! instead match the one-sided difference from the smooth side.

#![allow(dead_code)]

use conformal_gan::conformal::{
    weighted_conformity_gap, GapBatch, GapStates, IsotonicFit, ScorerState, WeightVector,
};
use conformal_gan::data::{make_gaussian_mixture, LabeledDataset, MixtureSpec};
use conformal_gan::gan::{
    discriminator_loss, generate, generator_loss, sample_latent, DiscBatch, GenBatch, TrainConfig,
};
use conformal_gan::nn::{one_hot, random_directions, Activation, Matrix, MlpModel};
use conformal_gan::rng::seeded;
use rand::Rng;

pub const REL_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;
const STEP: f64 = 1e-5;

#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub checked: usize,
    pub kinks: usize,
    pub failures: usize,
    /// Coordinates with a nonzero analytic gradient.
    pub nonzero: usize,
    pub worst: f64,
}

impl Tally {
    pub fn merge(&mut self, o: Tally) {
        self.checked += o.checked;
        self.kinks += o.kinks;
        self.failures += o.failures;
        self.nonzero += o.nonzero;
        self.worst = self.worst.max(o.worst);
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares `analytic[i]` with differences of `f` along coordinate `i`,
/// where `f(i, delta)` evaluates the loss with coordinate `i` shifted.
pub fn check_coords(analytic: &[f64], f: impl Fn(usize, f64) -> f64) -> Tally {
    let mut t = Tally::default();
    for (i, &a) in analytic.iter().enumerate() {
        let f0 = f(i, 0.0);
        let fp = f(i, STEP);
        let fm = f(i, -STEP);
        let central = (fp - fm) / (2.0 * STEP);
        let forward = (fp - f0) / STEP;
        let backward = (f0 - fm) / STEP;
        t.checked += 1;
        t.nonzero += (a != 0.0) as usize;
        let e = rel_err(a, central);
        if e <= REL_TOL {
            t.worst = t.worst.max(e);
            continue;
        }
        if rel_err(forward, backward) > 1e-3 {
            t.kinks += 1;
            let side = rel_err(a, forward).min(rel_err(a, backward));
            if side <= REL_TOL {
                continue;
            }
        }
        if std::env::var_os("GRADCHECK_DEBUG").is_some() {
            eprintln!("coord {i}: analytic {a:e} central {central:e} forward {forward:e} backward {backward:e} f0 {f0:e}");
        }
        t.failures += 1;
        t.worst = t.worst.max(e);
    }
    t
}

fn model_check(model: &MlpModel, analytic: &[f64], loss: impl Fn(&MlpModel) -> f64) -> Tally {
    check_coords(analytic, |i, d| {
        let mut m = model.clone();
        *m.param_mut(i) += d;
        loss(&m)
    })
}

pub struct Instance {
    pub data: LabeledDataset,
    pub gen: MlpModel,
    pub disc: MlpModel,
    pub states: GapStates,
    pub config: TrainConfig,
}

pub fn instance(seed: u64) -> Instance {
    let data = make_gaussian_mixture(&MixtureSpec::default_mixture(90, seed))
        .unwrap()
        .standardize()
        .unwrap();
    let config = TrainConfig {
        d_z: 3,
        batch_size: 8,
        hidden: vec![6],
        k_folds: 3,
        pool_size: 45,
        seed,
        ..TrainConfig::default()
    };
    let gen = MlpModel::new(&config.generator_dims(2), Activation::Linear, seed).unwrap();
    let disc = MlpModel::new(
        &config.discriminator_dims(2),
        Activation::Sigmoid,
        seed + 7919,
    )
    .unwrap();
    let fake_pool = generate(
        &gen,
        3,
        45,
        Some(&(0..45).map(|i| i % 3).collect::<Vec<_>>()),
        seed,
    )
    .unwrap();
    let real_pool = data.subset(&(0..45).collect::<Vec<_>>());
    let venn = IsotonicFit::from_discriminator(&disc, &real_pool, &fake_pool).unwrap();
    let states = GapStates {
        real: ScorerState::fit(&data, 3, venn.clone()).unwrap(),
        fake: ScorerState::fit(&fake_pool, 3, venn).unwrap(),
    };
    Instance {
        data,
        gen,
        disc,
        states,
        config,
    }
}

fn real_batch(inst: &Instance, rng: &mut impl Rng, b: usize) -> (Matrix, Vec<usize>) {
    let idx: Vec<usize> = (0..b)
        .map(|_| rng.random_range(0..inst.data.len()))
        .collect();
    (
        inst.data.features().select_rows(&idx),
        idx.iter().map(|&i| inst.data.labels()[i]).collect(),
    )
}

/// Raw network backward pass for both output activations.
pub fn check_mlp(seed: u64) -> Tally {
    let mut rng = seeded(seed, 11);
    let mut t = Tally::default();
    for act in [Activation::Linear, Activation::Sigmoid] {
        let model = MlpModel::new(&[4, 5, 5, 2], act, seed).unwrap();
        let mut x = Matrix::zeros(6, 4);
        conformal_gan::rng::fill_standard_normal(&mut rng, x.data_mut());
        let mut r = Matrix::zeros(6, 2);
        conformal_gan::rng::fill_standard_normal(&mut rng, r.data_mut());
        let loss = |m: &MlpModel| -> f64 {
            m.forward(&x)
                .unwrap()
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let g = model.backward(&x, &r).unwrap();
        t.merge(model_check(&model, &g.flat_params(), loss));
        let input_grad = g.input.unwrap();
        t.merge(check_coords(input_grad.data(), |i, d| {
            let mut xs = x.clone();
            xs.data_mut()[i] += d;
            model
                .forward(&xs)
                .unwrap()
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| a * b)
                .sum()
        }));
    }
    t
}

/// Discriminator loss (BCE plus gradient penalty) against its parameters.
pub fn check_discriminator(inst: &Instance, seed: u64) -> Tally {
    let mut rng = seeded(seed, 12);
    let (real, real_labels) = real_batch(inst, &mut rng, 8);
    let (z, fake_labels) = sample_latent(&mut rng, 8, inst.config.d_z, 3);
    let batch = DiscBatch {
        real,
        real_labels,
        z,
        fake_labels,
        directions: random_directions(&mut rng, 8, 2),
    };
    let c = &inst.config;
    let loss = |d: &MlpModel| {
        discriminator_loss(&inst.gen, d, &batch, 3, c.lambda_reg, c.penalty_eps)
            .unwrap()
            .total
    };
    let g = discriminator_loss(
        &inst.gen,
        &inst.disc,
        &batch,
        3,
        c.lambda_reg,
        c.penalty_eps,
    )
    .unwrap()
    .grads;
    model_check(&inst.disc, &g.flat_params(), loss)
}

/// Generator loss (adversarial plus weighted conformity gap) against its
/// parameters.
pub fn check_generator(inst: &Instance, seed: u64) -> Tally {
    let mut rng = seeded(seed, 13);
    let (real, real_labels) = real_batch(inst, &mut rng, 8);
    let (z, fake_labels) = sample_latent(&mut rng, 8, inst.config.d_z, 3);
    let batch = GenBatch {
        real,
        real_labels,
        z,
        fake_labels,
    };
    let w = WeightVector::uniform();
    let loss = |g: &MlpModel| {
        generator_loss(g, &inst.disc, &batch, 3, Some(&inst.states), &w, 1.0)
            .unwrap()
            .total
    };
    let g = generator_loss(
        &inst.gen,
        &inst.disc,
        &batch,
        3,
        Some(&inst.states),
        &w,
        1.0,
    )
    .unwrap()
    .grads;
    model_check(&inst.gen, &g.flat_params(), loss)
}

/// Weighted conformity gap against the generated features, with the
/// Venn-Abers term reached through the discriminator.
pub fn check_gap(inst: &Instance, seed: u64, weights: WeightVector) -> Tally {
    let mut rng = seeded(seed, 14);
    let (real, real_labels) = real_batch(inst, &mut rng, 8);
    let (fake, fake_labels) = real_batch(inst, &mut rng, 8);
    let mut fake = fake;
    conformal_gan::rng::fill_standard_normal(&mut rng, fake.data_mut());
    let disc_out = |x: &Matrix, y: &[usize]| -> Vec<f64> {
        inst.disc
            .forward(&x.hstack(&one_hot(y, 3)).unwrap())
            .unwrap()
            .into_data()
    };
    let real_disc = disc_out(&real, &real_labels);
    let value = |f: &Matrix| -> f64 {
        let fd = disc_out(f, &fake_labels);
        let batch = GapBatch {
            real: &real,
            real_labels: &real_labels,
            real_disc: &real_disc,
            fake: f,
            fake_labels: &fake_labels,
            fake_disc: &fd,
        };
        weighted_conformity_gap(&weights, &inst.states, &batch)
            .unwrap()
            .total
            .value
    };
    let fd = disc_out(&fake, &fake_labels);
    let batch = GapBatch {
        real: &real,
        real_labels: &real_labels,
        real_disc: &real_disc,
        fake: &fake,
        fake_labels: &fake_labels,
        fake_disc: &fd,
    };
    let gap = weighted_conformity_gap(&weights, &inst.states, &batch)
        .unwrap()
        .total;
    let through_disc = inst
        .disc
        .backward(
            &fake.hstack(&one_hot(&fake_labels, 3)).unwrap(),
            &Matrix::from_vec(8, 1, gap.grad_fake_disc.clone()).unwrap(),
        )
        .unwrap()
        .input
        .unwrap()
        .columns(0, 2);
    let mut analytic = gap.grad_fake.clone();
    analytic.add_scaled(&through_disc, 1.0).unwrap();
    check_coords(analytic.data(), |i, d| {
        let mut f = fake.clone();
        f.data_mut()[i] += d;
        value(&f)
    })
}
