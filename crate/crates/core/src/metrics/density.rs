use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::conformal::{conformal_quantile, Calibrator};
use crate::data::LabeledDataset;
use crate::nn::{Matrix, MlpModel};
use crate::par::{self, Mode};

/// Local-width curve: mean prediction radius per density decile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthDensity {
    /// `(decile midpoint, mean radius)`, empty deciles omitted.
    pub rows: Vec<[f64; 2]>,
    pub spearman: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean distance from `x` to its `k` nearest rows of `reference`, skipping
/// row `skip`.
fn mean_knn_distance(reference: &Matrix, x: &[f64], k: usize, skip: Option<usize>) -> f64 {
    let mut d: Vec<f64> = reference
        .iter_rows()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .map(|(_, r)| dist(r, x))
        .collect();
    let k = k.min(d.len());
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d[..k].iter().sum::<f64>() / k as f64
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// column is constant or fewer than two rows are given.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (ra, rb) = (ranks(&a[..n]), ranks(&b[..n]));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn width_vs_density_with(
    mode: Mode,
    calibrator: &Calibrator,
    calib: &LabeledDataset,
    samples: &LabeledDataset,
    disc: &MlpModel,
    k_nn: usize,
) -> Result<WidthDensity, MetricsError> {
    if k_nn == 0 {
        return Err(MetricsError::Invalid("k_nn must be at least 1".into()));
    }
    if calib.len() <= k_nn {
        return Err(MetricsError::Invalid(format!(
            "calibration set of {} points is too small for {k_nn} neighbours",
            calib.len()
        )));
    }
    if samples.len() <= k_nn {
        return Err(MetricsError::Invalid(format!(
            "{} samples are too few for {k_nn} neighbours",
            samples.len()
        )));
    }
    if calib.dim() != samples.dim() {
        return Err(MetricsError::DimensionMismatch {
            real: calib.dim(),
            synth: samples.dim(),
        });
    }
    let cf = calib.features();
    let sf = samples.features();

    let scores = calibrator.weighted_scores_with(mode, cf, calib.labels(), disc)?;
    let rho_calib = par::map_range(mode, calib.len(), |i| {
        mean_knn_distance(cf, cf.row(i), k_nn, Some(i))
    });
    let mut normalized: Vec<f64> = scores
        .iter()
        .zip(&rho_calib)
        .map(|(s, r)| s / r.max(f64::MIN_POSITIVE))
        .collect();
    normalized.sort_by(f64::total_cmp);
    let q = conformal_quantile(&normalized, calibrator.alpha())?;

    let rho = par::map_range(mode, samples.len(), |i| {
        mean_knn_distance(cf, sf.row(i), k_nn, None)
    });
    let radius: Vec<f64> = rho.iter().map(|r| q * r).collect();
    let raw_density = par::map_range(mode, samples.len(), |i| {
        1.0 / mean_knn_distance(sf, sf.row(i), k_nn, Some(i)).max(f64::MIN_POSITIVE)
    });
    let lo = raw_density.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw_density
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let mut sums = [0.0; 10];
    let mut counts = [0usize; 10];
    for (d, r) in raw_density.iter().zip(&radius) {
        let u = if span > 0.0 { (d - lo) / span } else { 0.5 };
        let bin = ((u * 10.0) as usize).min(9);
        sums[bin] += r;
        counts[bin] += 1;
    }
    let rows: Vec<[f64; 2]> = (0..10)
        .filter(|&b| counts[b] > 0)
        .map(|b| [(b as f64 + 0.5) / 10.0, sums[b] / counts[b] as f64])
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r[0], r[1])).unzip();
    Ok(WidthDensity {
        spearman: spearman(&xs, &ys),
        rows,
    })
}

/// Mean local prediction radius per decile of normalized sample density.
///
/// The local radius at `x` is `q * rho(x)`, where `rho` is the mean distance
/// to the `k_nn` nearest calibration points and `q` the conformal quantile
/// of the density-normalized calibration scores. Density is the inverse mean
/// `k_nn`-neighbour distance among the samples, rescaled to `[0, 1]`.
pub fn width_vs_density(
    calibrator: &Calibrator,
    calib: &LabeledDataset,
    samples: &LabeledDataset,
    disc: &MlpModel,
    k_nn: usize,
) -> Result<WidthDensity, MetricsError> {
    width_vs_density_with(Mode::default(), calibrator, calib, samples, disc, k_nn)
}
