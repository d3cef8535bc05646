//! Discriminator and generator objectives with analytic parameter
//! gradients, evaluated on fully specified batches (all randomness drawn
//! beforehand) so they are deterministic functions of the parameters.

use super::GanError;
use crate::conformal::{disc_outputs, weighted_conformity_gap, GapBatch, GapStates, WeightVector};
use crate::nn::{one_hot, penalty_parts, GradientBundle, Matrix, MlpModel};

/// Floor inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

fn clamped_log(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// d/dp of `clamped_log(p)`.
fn clamped_log_grad(p: f64) -> f64 {
    if p > LOG_FLOOR {
        1.0 / p
    } else {
        0.0
    }
}

/// Inputs of one discriminator update.
#[derive(Debug, Clone)]
pub struct DiscBatch {
    pub real: Matrix,
    pub real_labels: Vec<usize>,
    pub z: Matrix,
    pub fake_labels: Vec<usize>,
    /// Unit directions for the gradient penalty, one per real row.
    pub directions: Matrix,
}

#[derive(Debug, Clone)]
pub struct DiscLoss {
    /// `bce + lambda_reg * penalty`.
    pub total: f64,
    pub bce: f64,
    pub penalty: f64,
    pub grads: GradientBundle,
}

/// Inputs of one generator update.
#[derive(Debug, Clone)]
pub struct GenBatch {
    pub real: Matrix,
    pub real_labels: Vec<usize>,
    pub z: Matrix,
    pub fake_labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GenLoss {
    /// `adversarial + mu_conform * c_g`.
    pub total: f64,
    pub adversarial: f64,
    /// λ-weighted conformity discrepancy.
    pub c_g: f64,
    /// Unweighted discrepancy of each method.
    pub per_method: [f64; 4],
    pub grads: GradientBundle,
}

pub(crate) fn generator_input(
    z: &Matrix,
    labels: &[usize],
    n_classes: usize,
) -> Result<Matrix, GanError> {
    Ok(z.hstack(&one_hot(labels, n_classes))?)
}

pub(crate) fn discriminator_input(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
) -> Result<Matrix, GanError> {
    Ok(x.hstack(&one_hot(labels, n_classes))?)
}

/// `−(1/B) Σ [log D(x_i, y_i) + log(1 − D(G(z_i, y'_i), y'_i))] + λ_reg · P`
/// where `P` is the directional gradient penalty at the real samples.
pub fn discriminator_loss(
    gen: &MlpModel,
    disc: &MlpModel,
    batch: &DiscBatch,
    n_classes: usize,
    lambda_reg: f64,
    penalty_eps: f64,
) -> Result<DiscLoss, GanError> {
    let b = batch.real.rows();
    if batch.z.rows() != b || batch.real_labels.len() != b || batch.fake_labels.len() != b {
        return Err(GanError::Shape(
            "discriminator batch pieces differ in length".into(),
        ));
    }
    let inv_b = 1.0 / b.max(1) as f64;
    let fake = gen.forward(&generator_input(&batch.z, &batch.fake_labels, n_classes)?)?;
    let real_trace = disc.forward_trace(&discriminator_input(
        &batch.real,
        &batch.real_labels,
        n_classes,
    )?)?;
    let fake_trace =
        disc.forward_trace(&discriminator_input(&fake, &batch.fake_labels, n_classes)?)?;
    let pen = penalty_parts(disc, &real_trace, &batch.directions, penalty_eps)?;

    let mut bce = 0.0;
    let mut real_grad = Matrix::zeros(b, 1);
    for (i, &p) in real_trace.output().data().iter().enumerate() {
        bce -= clamped_log(p);
        real_grad.data_mut()[i] =
            -inv_b * clamped_log_grad(p) + lambda_reg * pen.base_output_grad.data()[i];
    }
    let mut fake_grad = Matrix::zeros(b, 1);
    for (i, &p) in fake_trace.output().data().iter().enumerate() {
        bce -= clamped_log(1.0 - p);
        fake_grad.data_mut()[i] = inv_b * clamped_log_grad(1.0 - p);
    }
    bce *= inv_b;

    let mut grads = disc.backward_trace(&real_trace, &real_grad)?;
    grads.add_scaled(&disc.backward_trace(&fake_trace, &fake_grad)?, 1.0)?;
    if lambda_reg != 0.0 {
        let mut pert_grad = pen.perturbed_output_grad;
        pert_grad.scale(lambda_reg);
        grads.add_scaled(&disc.backward_trace(&pen.perturbed, &pert_grad)?, 1.0)?;
    }
    grads.input = None;
    Ok(DiscLoss {
        total: bce + lambda_reg * pen.value,
        bce,
        penalty: pen.value,
        grads,
    })
}

/// `−(1/B) Σ log D(G(z_i, y'_i), y'_i) + μ · C_G` with `C_G` the λ-weighted
/// conformity discrepancy against the real batch. Without `states` the
/// discrepancy is skipped and reported as zero.
pub fn generator_loss(
    gen: &MlpModel,
    disc: &MlpModel,
    batch: &GenBatch,
    n_classes: usize,
    states: Option<&GapStates>,
    weights: &WeightVector,
    mu_conform: f64,
) -> Result<GenLoss, GanError> {
    let b = batch.z.rows();
    if batch.real.rows() != b || batch.real_labels.len() != b || batch.fake_labels.len() != b {
        return Err(GanError::Shape(
            "generator batch pieces differ in length".into(),
        ));
    }
    let inv_b = 1.0 / b.max(1) as f64;
    let gen_trace =
        gen.forward_trace(&generator_input(&batch.z, &batch.fake_labels, n_classes)?)?;
    let fake = gen_trace.output().clone();
    let d = fake.cols();
    let disc_trace =
        disc.forward_trace(&discriminator_input(&fake, &batch.fake_labels, n_classes)?)?;
    let fake_disc = disc_trace.output().data().to_vec();

    let mut adversarial = 0.0;
    let mut out_grad = Matrix::zeros(b, 1);
    for (i, &p) in fake_disc.iter().enumerate() {
        adversarial -= clamped_log(p);
        out_grad.data_mut()[i] = -inv_b * clamped_log_grad(p);
    }
    adversarial *= inv_b;

    let mut c_g = 0.0;
    let mut per_method = [0.0; 4];
    let mut feature_grad = None;
    if let Some(states) = states {
        let real_disc = disc_outputs(&batch.real, &batch.real_labels, disc)?;
        let gap = weighted_conformity_gap(
            weights,
            states,
            &GapBatch {
                real: &batch.real,
                real_labels: &batch.real_labels,
                real_disc: &real_disc,
                fake: &fake,
                fake_labels: &batch.fake_labels,
                fake_disc: &fake_disc,
            },
        )?;
        c_g = gap.total.value;
        per_method = gap.per_method;
        if mu_conform != 0.0 {
            for (g, v) in out_grad
                .data_mut()
                .iter_mut()
                .zip(&gap.total.grad_fake_disc)
            {
                *g += mu_conform * v;
            }
            feature_grad = Some(gap.total.grad_fake);
        }
    }

    let disc_grads = disc.backward_trace(&disc_trace, &out_grad)?;
    let mut fake_grad = disc_grads
        .input
        .expect("backward yields an input gradient")
        .columns(0, d);
    if let Some(fg) = feature_grad {
        fake_grad.add_scaled(&fg, mu_conform)?;
    }
    let mut grads = gen.backward_trace(&gen_trace, &fake_grad)?;
    grads.input = None;
    Ok(GenLoss {
        total: adversarial + mu_conform * c_g,
        adversarial,
        c_g,
        per_method,
        grads,
    })
}
