//! Candidate grids over the weight simplex and deterministic argmin.

use super::{ConformalError, WeightVector};
use crate::par::{self, Mode};

/// All weight vectors whose entries are multiples of `1/steps`, in
/// lexicographic order. `steps = 4` gives the 35-point grid of step 0.25.
pub fn simplex_grid(steps: usize) -> Vec<WeightVector> {
    let mut out = Vec::new();
    let s = steps as f64;
    for a in 0..=steps {
        for b in 0..=steps - a {
            for c in 0..=steps - a - b {
                let d = steps - a - b - c;
                out.push(
                    WeightVector::new([a as f64 / s, b as f64 / s, c as f64 / s, d as f64 / s])
                        .expect("grid point on simplex"),
                );
            }
        }
    }
    out
}

/// Outcome of evaluating every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: WeightVector,
    pub best_index: usize,
    pub criteria: Vec<f64>,
}

/// Evaluates `criterion` on every candidate and returns the minimizer; ties
/// (and NaN criteria, which never win) resolve to the earliest candidate.
pub fn select_weights_with<F>(
    mode: Mode,
    candidates: &[WeightVector],
    criterion: F,
) -> Result<Selection, ConformalError>
where
    F: Fn(usize, &WeightVector) -> f64 + Sync + Send,
{
    if candidates.is_empty() {
        return Err(ConformalError::Invalid(
            "weight selection needs at least one candidate".into(),
        ));
    }
    let criteria = par::map_range(mode, candidates.len(), |i| criterion(i, &candidates[i]));
    let mut best_index = 0;
    for (i, &v) in criteria.iter().enumerate() {
        if v < criteria[best_index] || (criteria[best_index].is_nan() && !v.is_nan()) {
            best_index = i;
        }
    }
    Ok(Selection {
        best: candidates[best_index],
        best_index,
        criteria,
    })
}

pub fn select_weights<F>(
    candidates: &[WeightVector],
    criterion: F,
) -> Result<Selection, ConformalError>
where
    F: Fn(usize, &WeightVector) -> f64 + Sync + Send,
{
    select_weights_with(Mode::default(), candidates, criterion)
}
