use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Gaussian blobs: one isotropic cluster per class with standard-normal
/// class means and within-class standard deviation `spread`.
///
/// Samples are laid out class by class.
pub fn gen_synthetic(
    num_classes: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || dim < 1 || samples_per_class < 1 || !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs K >= 2, d >= 1, n >= 1, spread > 0 (got K={num_classes}, d={dim}, n={samples_per_class}, spread={spread})"
        )));
    }
    let mut mean_rng = stream_rng(seed, Stream::Synthetic, &[0]);
    let means: Vec<f64> = (0..num_classes * dim).map(|_| StandardNormal.sample(&mut mean_rng)).collect();
    let noise = Normal::new(0.0, spread).expect("spread validated above");
    let mut rng = stream_rng(seed, Stream::Synthetic, &[1]);

    let total = num_classes * samples_per_class;
    let mut features = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for class in 0..num_classes {
        let mean = &means[class * dim..(class + 1) * dim];
        for _ in 0..samples_per_class {
            features.extend(mean.iter().map(|m| m + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    Dataset::new(features, dim, labels, num_classes)
}

/// Stratified split: within each class a seeded shuffle sends
/// `round(test_fraction * n_k)` samples to the test set.
pub fn train_test_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    let mut rng = stream_rng(seed, Stream::Split, &[]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..ds.num_classes() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_per_label() {
        let ds = gen_synthetic(2, 2, 50, 0.1, 1).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.class_counts(), vec![50, 50]);
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(gen_synthetic(3, 4, 10, 0.5, 9).unwrap(), gen_synthetic(3, 4, 10, 0.5, 9).unwrap());
        assert_ne!(gen_synthetic(3, 4, 10, 0.5, 9).unwrap(), gen_synthetic(3, 4, 10, 0.5, 10).unwrap());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_synthetic(1, 2, 5, 0.1, 0).is_err());
        assert!(gen_synthetic(2, 0, 5, 0.1, 0).is_err());
        assert!(gen_synthetic(2, 2, 0, 0.1, 0).is_err());
        assert!(gen_synthetic(2, 2, 5, 0.0, 0).is_err());
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let ds = gen_synthetic(4, 3, 25, 1.0, 3).unwrap();
        let (train, test) = train_test_split(&ds, 0.2, 3).unwrap();
        assert_eq!(train.class_counts(), vec![20; 4]);
        assert_eq!(test.class_counts(), vec![5; 4]);
        let mut rows: Vec<Vec<u64>> = train
            .features()
            .chunks(3)
            .chain(test.features().chunks(3))
            .map(|r| r.iter().map(|x| x.to_bits()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 100);
    }
}
