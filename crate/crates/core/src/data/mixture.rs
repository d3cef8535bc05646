use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledDataset};
use crate::nn::Matrix;
use crate::rng::{fill_standard_normal, seeded};

/// Isotropic Gaussian mixture with uniformly drawn classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    pub std: f64,
    pub n: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// Class means evenly spaced on a circle of `radius` in the first two
    /// coordinates; remaining coordinates are centered at zero.
    pub fn circle(
        n_classes: usize,
        dim: usize,
        radius: f64,
        std: f64,
        n: usize,
        seed: u64,
    ) -> Self {
        let means = (0..n_classes)
            .map(|k| {
                let angle = std::f64::consts::TAU * k as f64 / n_classes.max(1) as f64;
                let mut m = vec![0.0; dim];
                if dim >= 1 {
                    m[0] = radius * angle.cos();
                }
                if dim >= 2 {
                    m[1] = radius * angle.sin();
                }
                m
            })
            .collect();
        Self {
            n_classes,
            dim,
            means,
            std,
            n,
            seed,
        }
    }

    /// Three classes in 2-D at 0°, 120°, 240° on radius 4 with unit spread.
    pub fn default_mixture(n: usize, seed: u64) -> Self {
        Self::circle(3, 2, 4.0, 1.0, n, seed)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_classes == 0 || self.dim == 0 {
            return Err(DataError::Invalid(
                "mixture needs at least one class and one dimension".into(),
            ));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(DataError::Invalid(format!(
                "mixture std must be positive, got {}",
                self.std
            )));
        }
        if self.means.len() != self.n_classes || self.means.iter().any(|m| m.len() != self.dim) {
            return Err(DataError::Invalid(
                "one mean vector of length dim per class required".into(),
            ));
        }
        Ok(())
    }
}

pub fn make_gaussian_mixture(spec: &MixtureSpec) -> Result<LabeledDataset, DataError> {
    spec.validate()?;
    let mut rng = seeded(spec.seed, 0);
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    let mut labels = Vec::with_capacity(spec.n);
    let mut noise = vec![0.0; spec.dim];
    for _ in 0..spec.n {
        let y = rng.random_range(0..spec.n_classes);
        fill_standard_normal(&mut rng, &mut noise);
        data.extend(
            spec.means[y]
                .iter()
                .zip(&noise)
                .map(|(m, e)| m + spec.std * e),
        );
        labels.push(y);
    }
    LabeledDataset::new(
        Matrix::from_vec(spec.n, spec.dim, data)?,
        labels,
        spec.n_classes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mixture() {
        let d = make_gaussian_mixture(&MixtureSpec::default_mixture(0, 1)).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.dim(), 2);
    }

    #[test]
    fn deterministic_by_seed() {
        let a = make_gaussian_mixture(&MixtureSpec::default_mixture(100, 5)).unwrap();
        let b = make_gaussian_mixture(&MixtureSpec::default_mixture(100, 5)).unwrap();
        let c = make_gaussian_mixture(&MixtureSpec::default_mixture(100, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn class_counts_are_multinomial() {
        let n = 30_000;
        let d = make_gaussian_mixture(&MixtureSpec::default_mixture(n, 17)).unwrap();
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in d.class_counts() {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{c}");
        }
    }

    #[test]
    fn class_means_match_spec() {
        let d = make_gaussian_mixture(&MixtureSpec::default_mixture(9000, 2)).unwrap();
        let spec = MixtureSpec::default_mixture(0, 0);
        for k in 0..3 {
            let rows: Vec<&[f64]> = (0..d.len())
                .filter(|&i| d.labels()[i] == k)
                .map(|i| d.features().row(i))
                .collect();
            for j in 0..2 {
                let m = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
                assert!((m - spec.means[k][j]).abs() < 0.1);
            }
        }
        assert!((spec.means[1][0] - 4.0 * (std::f64::consts::TAU / 3.0).cos()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_spec() {
        let mut s = MixtureSpec::default_mixture(10, 1);
        s.std = 0.0;
        assert!(make_gaussian_mixture(&s).is_err());
    }
}
