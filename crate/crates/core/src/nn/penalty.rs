//! Directional finite-difference surrogate for `‖∇ₓ D‖²`.
//!
//! For each row the input's data columns are nudged along a random unit
//! direction `u`; the penalty is `(1/B) Σ ((D(x + εu) − D(x)) / ε)²`. Its
//! parameter gradient needs only ordinary backprop through the two forward
//! passes, so no second-order differentiation is involved.

use rand::Rng;

use super::{GradientBundle, Matrix, MlpModel, NnError, Trace};
use crate::rng::unit_vector;

#[derive(Debug, Clone)]
pub struct PenaltyOutput {
    pub value: f64,
    pub grads: GradientBundle,
}

/// Pieces of the penalty that let a caller fuse the base-pass gradient with
/// other losses evaluated on the same forward trace.
pub(crate) struct PenaltyParts {
    pub value: f64,
    pub base_output_grad: Matrix,
    pub perturbed: Trace,
    pub perturbed_output_grad: Matrix,
}

/// `rows x dim` matrix of independent random unit directions.
pub fn random_directions<R: Rng + ?Sized>(rng: &mut R, rows: usize, dim: usize) -> Matrix {
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        data.extend(unit_vector(rng, dim));
    }
    Matrix::from_vec(rows, dim, data).expect("rows*dim values")
}

pub(crate) fn penalty_parts(
    model: &MlpModel,
    base: &Trace,
    directions: &Matrix,
    eps: f64,
) -> Result<PenaltyParts, NnError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(NnError::Config(format!(
            "penalty step must be positive, got {eps}"
        )));
    }
    let input = base.input();
    let (rows, d) = directions.shape();
    if rows != input.rows() || d > input.cols() {
        return Err(NnError::Shape(format!(
            "directions {:?} do not fit input {:?}",
            directions.shape(),
            input.shape()
        )));
    }
    let mut shifted = input.clone();
    for r in 0..rows {
        for (v, u) in shifted.row_mut(r)[..d].iter_mut().zip(directions.row(r)) {
            *v += eps * u;
        }
    }
    let perturbed = model.forward_trace(&shifted)?;
    let b = rows.max(1) as f64;
    let mut value = 0.0;
    let mut base_output_grad = Matrix::zeros(rows, model.output_dim());
    let mut perturbed_output_grad = Matrix::zeros(rows, model.output_dim());
    for (i, (p, q)) in perturbed
        .output()
        .data()
        .iter()
        .zip(base.output().data())
        .enumerate()
    {
        let delta = (p - q) / eps;
        value += delta * delta;
        let g = 2.0 * delta / (b * eps);
        perturbed_output_grad.data_mut()[i] = g;
        base_output_grad.data_mut()[i] = -g;
    }
    Ok(PenaltyParts {
        value: value / b,
        base_output_grad,
        perturbed,
        perturbed_output_grad,
    })
}

/// Penalty and parameter gradient for fixed directions. The first
/// `directions.cols()` columns of `input` are perturbed; any remaining
/// (conditioning) columns are held fixed.
pub fn grad_penalty_with_directions(
    model: &MlpModel,
    input: &Matrix,
    directions: &Matrix,
    eps: f64,
) -> Result<PenaltyOutput, NnError> {
    let base = model.forward_trace(input)?;
    let parts = penalty_parts(model, &base, directions, eps)?;
    let mut grads = model.backward_trace(&base, &parts.base_output_grad)?;
    let pert = model.backward_trace(&parts.perturbed, &parts.perturbed_output_grad)?;
    grads.add_scaled(&pert, 1.0)?;
    grads.input = None;
    Ok(PenaltyOutput {
        value: parts.value,
        grads,
    })
}

/// [`grad_penalty_with_directions`] with a fresh random unit direction per
/// row over the first `data_dims` columns.
pub fn grad_penalty_surrogate<R: Rng + ?Sized>(
    model: &MlpModel,
    input: &Matrix,
    data_dims: usize,
    eps: f64,
    rng: &mut R,
) -> Result<PenaltyOutput, NnError> {
    let directions = random_directions(rng, input.rows(), data_dims);
    grad_penalty_with_directions(model, input, &directions, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_input(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_model_has_zero_penalty() {
        let model = MlpModel::from_parameters(
            vec![Matrix::zeros(3, 1)],
            vec![Matrix::from_vec(1, 1, vec![0.7]).unwrap()],
            Activation::Sigmoid,
        )
        .unwrap();
        let mut rng = seeded(1, 0);
        let x = random_input(&mut rng, 5, 3);
        let out = grad_penalty_surrogate(&model, &x, 3, 1e-3, &mut rng).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads.flat_params().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_model_matches_directional_derivative() {
        // D(x) = w·x: the difference quotient equals w·u for every ε.
        let w = [0.5, -2.0, 1.25];
        let model = MlpModel::from_parameters(
            vec![Matrix::from_vec(3, 1, w.to_vec()).unwrap()],
            vec![Matrix::zeros(1, 1)],
            Activation::Linear,
        )
        .unwrap();
        let mut rng = seeded(2, 0);
        let x = random_input(&mut rng, 6, 3);
        let dirs = random_directions(&mut rng, 6, 3);
        let expected: f64 = dirs
            .iter_rows()
            .map(|u| {
                let wu: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                wu * wu
            })
            .sum::<f64>()
            / 6.0;
        for eps in [1e-1, 1e-3, 1e-5] {
            let out = grad_penalty_with_directions(&model, &x, &dirs, eps).unwrap();
            assert!(
                (out.value - expected).abs() < 1e-8 * expected.max(1.0),
                "eps {eps}"
            );
        }
    }

    #[test]
    fn conditioning_columns_are_not_perturbed() {
        // Weight only on the conditioning column: zero penalty.
        let model = MlpModel::from_parameters(
            vec![Matrix::from_vec(3, 1, vec![0.0, 0.0, 5.0]).unwrap()],
            vec![Matrix::zeros(1, 1)],
            Activation::Linear,
        )
        .unwrap();
        let mut rng = seeded(3, 0);
        let x = random_input(&mut rng, 4, 3);
        let out = grad_penalty_surrogate(&model, &x, 2, 1e-2, &mut rng).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn small_eps_approaches_squared_directional_derivative() {
        let model = MlpModel::new(&[2, 16, 1], Activation::Sigmoid, 8).unwrap();
        let mut rng = seeded(4, 0);
        let x = random_input(&mut rng, 8, 2);
        let dirs = random_directions(&mut rng, 8, 2);
        let grad_x = model
            .backward(&x, &Matrix::from_vec(8, 1, vec![1.0; 8]).unwrap())
            .unwrap()
            .input
            .unwrap();
        let exact = (0..8)
            .map(|r| {
                let d: f64 = grad_x
                    .row(r)
                    .iter()
                    .zip(dirs.row(r))
                    .map(|(g, u)| g * u)
                    .sum();
                d * d
            })
            .sum::<f64>()
            / 8.0;
        let approx = grad_penalty_with_directions(&model, &x, &dirs, 1e-7)
            .unwrap()
            .value;
        assert!((approx - exact).abs() <= 1e-4 * exact, "{approx} {exact}");
    }

    #[test]
    fn rejects_bad_eps() {
        let model = MlpModel::new(&[2, 4, 1], Activation::Sigmoid, 1).unwrap();
        let mut rng = seeded(5, 0);
        let x = random_input(&mut rng, 3, 2);
        assert!(grad_penalty_surrogate(&model, &x, 2, 0.0, &mut rng).is_err());
    }
}
