//! Batch-level conformity discrepancy between real and generated samples.
//!
//! Real sample `i` is scored against statistics fitted on real data and
//! generated sample `i` against statistics fitted on generated data; the
//! discrepancy is the mean absolute score difference over the batch. The
//! gradient is taken with respect to the generated samples only.

use super::{scorer::distance, ConformalError, NonconformityMethod, ScorerState, WeightVector};
use crate::data::LabeledDataset;
use crate::nn::{Matrix, MlpModel};

/// Score statistics fitted on the real pool and on the generated pool.
#[derive(Debug, Clone, PartialEq)]
pub struct GapStates {
    pub real: ScorerState,
    pub fake: ScorerState,
}

/// One paired batch with precomputed discriminator outputs.
#[derive(Debug, Clone, Copy)]
pub struct GapBatch<'a> {
    pub real: &'a Matrix,
    pub real_labels: &'a [usize],
    pub real_disc: &'a [f64],
    pub fake: &'a Matrix,
    pub fake_labels: &'a [usize],
    pub fake_disc: &'a [f64],
}

/// Value of a discrepancy and its gradient with respect to the generated
/// features (geometric scores) and the discriminator outputs on the
/// generated samples (Venn-Abers score).
#[derive(Debug, Clone)]
pub struct GapValue {
    pub value: f64,
    pub grad_fake: Matrix,
    pub grad_fake_disc: Vec<f64>,
}

impl GapBatch<'_> {
    fn check(&self) -> Result<usize, ConformalError> {
        let b = self.real.rows();
        if self.fake.rows() != b
            || self.real_labels.len() != b
            || self.fake_labels.len() != b
            || self.real_disc.len() != b
            || self.fake_disc.len() != b
        {
            return Err(ConformalError::BatchMismatch {
                real: b,
                fake: self.fake.rows(),
            });
        }
        if self.real.cols() != self.fake.cols() {
            return Err(ConformalError::Invalid(
                "real and generated batches differ in width".into(),
            ));
        }
        Ok(b)
    }
}

fn add_unit_direction(out: &mut [f64], x: &[f64], mu: &[f64], scale: f64) {
    let d = distance(x, mu);
    if d > 0.0 {
        for ((o, a), m) in out.iter_mut().zip(x).zip(mu) {
            *o += scale * (a - m) / d;
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(1/B) Σ |s(x_i; real) − s(x̃_i; fake)|` for one method, with gradient.
pub fn conformity_gap(
    method: NonconformityMethod,
    states: &GapStates,
    batch: &GapBatch<'_>,
) -> Result<GapValue, ConformalError> {
    let b = batch.check()?;
    let mut grad_fake = Matrix::zeros(b, batch.fake.cols());
    let mut grad_fake_disc = vec![0.0; b];
    if b == 0 {
        return Ok(GapValue {
            value: 0.0,
            grad_fake,
            grad_fake_disc,
        });
    }
    let inv_b = 1.0 / b as f64;
    let mut total = 0.0;
    for (i, g_disc) in grad_fake_disc.iter_mut().enumerate() {
        let x = batch.real.row(i);
        let xf = batch.fake.row(i);
        let yf = batch.fake_labels[i];
        let (s_real, s_fake) = match method {
            NonconformityMethod::Icp => (states.real.icp(x), states.fake.icp(xf)),
            NonconformityMethod::Mondrian => (
                states.real.mondrian(x, batch.real_labels[i])?,
                states.fake.mondrian(xf, yf)?,
            ),
            NonconformityMethod::CrossConformal => (states.real.cross(x), states.fake.cross(xf)),
            NonconformityMethod::VennAbers => (
                states.real.venn(batch.real_disc[i]),
                states.fake.venn(batch.fake_disc[i]),
            ),
        };
        total += (s_real - s_fake).abs();
        // d|s_r − s_f| / d s_f
        let outer = -sign(s_real - s_fake) * inv_b;
        if outer == 0.0 {
            continue;
        }
        let g = grad_fake.row_mut(i);
        match method {
            NonconformityMethod::Icp => add_unit_direction(g, xf, &states.fake.icp_mean, outer),
            NonconformityMethod::Mondrian => {
                add_unit_direction(g, xf, &states.fake.mondrian_means[&yf], outer)
            }
            NonconformityMethod::CrossConformal => {
                let k = states.fake.cross.k as f64;
                for mu in &states.fake.cross.complement_means {
                    add_unit_direction(g, xf, mu, outer / (k * k));
                }
            }
            NonconformityMethod::VennAbers => {
                // s = 1 − f(p) since f ∈ [0, 1].
                let (_, slope) = states.fake.venn.eval_with_slope(batch.fake_disc[i]);
                *g_disc = -outer * slope;
            }
        }
    }
    Ok(GapValue {
        value: total * inv_b,
        grad_fake,
        grad_fake_disc,
    })
}

/// Per-method discrepancies and their λ-weighted sum with its gradient.
#[derive(Debug, Clone)]
pub struct WeightedGap {
    pub per_method: [f64; 4],
    pub total: GapValue,
}

pub fn weighted_conformity_gap(
    weights: &WeightVector,
    states: &GapStates,
    batch: &GapBatch<'_>,
) -> Result<WeightedGap, ConformalError> {
    let b = batch.check()?;
    let mut per_method = [0.0; 4];
    let mut total = GapValue {
        value: 0.0,
        grad_fake: Matrix::zeros(b, batch.fake.cols()),
        grad_fake_disc: vec![0.0; b],
    };
    for method in NonconformityMethod::ALL {
        let g = conformity_gap(method, states, batch)?;
        per_method[method.index()] = g.value;
        let w = weights.get(method);
        total.value += w * g.value;
        total.grad_fake.add_scaled(&g.grad_fake, w)?;
        for (t, v) in total.grad_fake_disc.iter_mut().zip(&g.grad_fake_disc) {
            *t += w * v;
        }
    }
    Ok(WeightedGap { per_method, total })
}

/// Discrepancy for one method on labeled batches, evaluating the
/// discriminator for the Venn-Abers term.
pub fn batch_conformity_gap(
    method: NonconformityMethod,
    states: &GapStates,
    real: &LabeledDataset,
    fake: &LabeledDataset,
    disc: &MlpModel,
) -> Result<f64, ConformalError> {
    if real.len() != fake.len() {
        return Err(ConformalError::BatchMismatch {
            real: real.len(),
            fake: fake.len(),
        });
    }
    let real_disc = super::disc_outputs(real.features(), real.labels(), disc)?;
    let fake_disc = super::disc_outputs(fake.features(), fake.labels(), disc)?;
    let batch = GapBatch {
        real: real.features(),
        real_labels: real.labels(),
        real_disc: &real_disc,
        fake: fake.features(),
        fake_labels: fake.labels(),
        fake_disc: &fake_disc,
    };
    Ok(conformity_gap(method, states, &batch)?.value)
}
