use super::MetricsError;
use crate::data::LabeledDataset;
use crate::par::{self, Mode};

/// Neighbours used by the downstream classifier.
pub const DOWNSTREAM_K: usize = 5;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote of the `k` nearest training rows. Distance ties go to the
/// lower row index, vote ties to the smaller class.
pub fn knn_predict(train: &LabeledDataset, x: &[f64], k: usize) -> usize {
    let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, row) in train.features().iter_rows().enumerate() {
        let d = sq_dist(row, x);
        if nearest.len() == k && d >= nearest[k - 1].0 {
            continue;
        }
        let pos = nearest.partition_point(|&(e, _)| e <= d);
        nearest.insert(pos, (d, i));
        nearest.truncate(k);
    }
    let n_classes = train
        .n_classes()
        .max(train.labels().iter().max().map_or(0, |&m| m + 1));
    let mut votes = vec![0usize; n_classes.max(1)];
    for &(_, i) in &nearest {
        votes[train.labels()[i]] += 1;
    }
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

pub fn downstream_accuracy_with(
    mode: Mode,
    synth_train: &LabeledDataset,
    real_test: &LabeledDataset,
) -> Result<f64, MetricsError> {
    if real_test.is_empty() {
        return Err(MetricsError::Empty("test set"));
    }
    if synth_train.len() < DOWNSTREAM_K {
        return Err(MetricsError::Invalid(format!(
            "downstream classifier needs at least {DOWNSTREAM_K} training rows, got {}",
            synth_train.len()
        )));
    }
    if synth_train.dim() != real_test.dim() {
        return Err(MetricsError::DimensionMismatch {
            real: real_test.dim(),
            synth: synth_train.dim(),
        });
    }
    let correct = par::map_range(mode, real_test.len(), |i| {
        let (x, y) = real_test.point(i);
        (knn_predict(synth_train, x, DOWNSTREAM_K) == y) as usize
    });
    Ok(correct.iter().sum::<usize>() as f64 / real_test.len() as f64)
}

/// Accuracy on `real_test` of a 5-nearest-neighbour classifier fitted on
/// `synth_train`.
pub fn downstream_accuracy(
    synth_train: &LabeledDataset,
    real_test: &LabeledDataset,
) -> Result<f64, MetricsError> {
    downstream_accuracy_with(Mode::default(), synth_train, real_test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_mixture, MixtureSpec};
    use crate::nn::Matrix;
    use crate::rng::seeded;
    use rand::seq::SliceRandom;

    fn ds(xs: &[f64], ys: &[usize], k: usize) -> LabeledDataset {
        LabeledDataset::new(
            Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap(),
            ys.to_vec(),
            k,
        )
        .unwrap()
    }

    #[test]
    fn separated_clusters_are_perfect() {
        let d = make_gaussian_mixture(&MixtureSpec::circle(3, 2, 50.0, 1.0, 300, 4)).unwrap();
        assert_eq!(downstream_accuracy(&d, &d).unwrap(), 1.0);
    }

    #[test]
    fn tie_rules() {
        // Votes 2-2-1 between classes 1 and 0: smaller class wins.
        let train = ds(&[0.0, 0.1, 0.2, 0.3, 0.4], &[1, 1, 0, 0, 2], 3);
        assert_eq!(knn_predict(&train, &[0.2], 5), 0);
        // Equidistant neighbours: the lower index is kept.
        let train = ds(&[-1.0, 1.0, 5.0], &[2, 1, 0], 3);
        assert_eq!(knn_predict(&train, &[0.0], 1), 2);
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let d = make_gaussian_mixture(&MixtureSpec::default_mixture(3000, 11)).unwrap();
        let mut labels = d.labels().to_vec();
        labels.shuffle(&mut seeded(2, 0));
        let shuffled = LabeledDataset::new(d.features().clone(), labels, 3).unwrap();
        let test = make_gaussian_mixture(&MixtureSpec::default_mixture(2000, 12)).unwrap();
        let acc = downstream_accuracy(&shuffled, &test).unwrap();
        let sigma = (1.0 / 3.0 * 2.0 / 3.0 / 2000.0f64).sqrt();
        assert!((acc - 1.0 / 3.0).abs() < 3.0 * sigma, "accuracy {acc}");
    }

    #[test]
    fn invariant_to_row_permutation_and_modes_agree() {
        let train = make_gaussian_mixture(&MixtureSpec::default_mixture(400, 1)).unwrap();
        let test = make_gaussian_mixture(&MixtureSpec::default_mixture(300, 2)).unwrap();
        let mut idx: Vec<usize> = (0..train.len()).collect();
        idx.shuffle(&mut seeded(3, 0));
        let a = downstream_accuracy_with(Mode::Sequential, &train, &test).unwrap();
        let b = downstream_accuracy_with(Mode::Parallel, &train.subset(&idx), &test).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_small_or_mismatched() {
        let small = ds(&[0.0, 1.0], &[0, 1], 2);
        assert!(downstream_accuracy(&small, &small).is_err());
        let wide = LabeledDataset::new(Matrix::zeros(6, 2), vec![0; 6], 1).unwrap();
        let narrow = ds(&[0.0; 6], &[0; 6], 1);
        assert!(downstream_accuracy(&wide, &narrow).is_err());
    }
}
