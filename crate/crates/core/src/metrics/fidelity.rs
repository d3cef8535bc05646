use super::MetricsError;
use crate::nn::Matrix;
use crate::par::{self, Mode};

fn sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.collect();
    v.sort_by(f64::total_cmp);
    v
}

fn column(m: &Matrix, j: usize) -> Vec<f64> {
    sorted(m.iter_rows().map(|r| r[j]))
}

/// Two-sample Kolmogorov-Smirnov statistic of two sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / n - j as f64 / m).abs());
    }
    best
}

/// Wasserstein-1 distance between two sorted samples: the integral of the
/// absolute difference of their quantile functions over the merged grid.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) as f64 / n as f64;
        let next_b = (j + 1) as f64 / m as f64;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        // Compare integer cross-products so coincident grid points advance
        // both sides together.
        let (ca, cb) = ((i + 1) * m, (j + 1) * n);
        if ca <= cb {
            i += 1;
        }
        if cb <= ca {
            j += 1;
        }
    }
    total
}

fn per_feature(
    real: &Matrix,
    synth: &Matrix,
    stat: fn(&[f64], &[f64]) -> f64,
) -> Result<f64, MetricsError> {
    if real.cols() != synth.cols() {
        return Err(MetricsError::DimensionMismatch {
            real: real.cols(),
            synth: synth.cols(),
        });
    }
    if real.rows() == 0 || synth.rows() == 0 {
        return Err(MetricsError::Empty("sample"));
    }
    if real.cols() == 0 {
        return Err(MetricsError::Invalid("no features to compare".into()));
    }
    let values = par::map_range(Mode::default(), real.cols(), |j| {
        stat(&column(real, j), &column(synth, j))
    });
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-feature two-sample KS statistic averaged over features.
pub fn ks_mean(real: &Matrix, synth: &Matrix) -> Result<f64, MetricsError> {
    per_feature(real, synth, ks_statistic)
}

/// Per-feature Wasserstein-1 distance averaged over features.
pub fn wasserstein_mean(real: &Matrix, synth: &Matrix) -> Result<f64, MetricsError> {
    per_feature(real, synth, wasserstein_1d)
}
