use rand::seq::SliceRandom;

use super::{DataError, LabeledDataset};
use crate::rng::seeded;

/// Train / calibration / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: LabeledDataset,
    pub calib: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl Splits {
    pub fn parts(&self) -> [&LabeledDataset; 4] {
        [&self.train, &self.calib, &self.val, &self.test]
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`; ties go
/// to the earlier piece.
fn apportion(n: usize, fractions: &[f64; 4]) -> [usize; 4] {
    let mut counts = [0usize; 4];
    let mut rema = [(0.0f64, 0usize); 4];
    for (j, f) in fractions.iter().enumerate() {
        let raw = n as f64 * f;
        counts[j] = raw.floor() as usize;
        rema[j] = (raw - raw.floor(), j);
    }
    let assigned: usize = counts.iter().sum();
    let mut left = n.saturating_sub(assigned);
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, j) in rema.iter().cycle() {
        if left == 0 {
            break;
        }
        if fractions[j] > 0.0 {
            counts[j] += 1;
            left -= 1;
        }
    }
    counts
}

/// Stratified, seeded split into four disjoint pieces covering every row.
///
/// Each class is shuffled and apportioned separately, and every class with
/// at least one row keeps at least one in train. Pieces are shuffled again
/// so rows are not grouped by class.
pub fn split(data: &LabeledDataset, fractions: [f64; 4], seed: u64) -> Result<Splits, DataError> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(DataError::Invalid(format!(
            "split fractions must be nonnegative: {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DataError::Invalid(format!(
            "split fractions sum to {total}, not 1"
        )));
    }
    let mut rng = seeded(seed, 0);
    let mut pieces: [Vec<usize>; 4] = Default::default();
    for class in 0..data.n_classes() {
        let mut idx: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels()[i] == class)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let mut counts = apportion(idx.len(), &fractions);
        if counts[0] == 0 {
            // Borrow one row for train from the largest other piece.
            let donor = (1..4)
                .max_by_key(|&j| (counts[j], std::cmp::Reverse(j)))
                .unwrap();
            if fractions[0] == 0.0 || counts[donor] == 0 {
                return Err(DataError::Invalid(format!(
                    "split leaves class {class} out of train"
                )));
            }
            counts[donor] -= 1;
            counts[0] += 1;
        }
        let mut start = 0;
        for (piece, count) in pieces.iter_mut().zip(counts) {
            piece.extend_from_slice(&idx[start..start + count]);
            start += count;
        }
    }
    for piece in pieces.iter_mut() {
        piece.shuffle(&mut rng);
    }
    let [train, calib, val, test] = pieces.map(|p| data.subset(&p));
    Ok(Splits {
        train,
        calib,
        val,
        test,
    })
}
