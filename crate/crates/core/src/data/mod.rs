//! Datasets, Non-IID partitioning and per-epoch batching.

mod csv_source;
mod partition;
mod synthetic;

pub use csv_source::{load_csv_dataset, ColumnRef, CsvSchema};
pub use partition::{dirichlet_partition, epoch_batches, BatchSize, Partition};
pub use synthetic::{gen_synthetic, train_test_split};

use crate::error::{Error, Result};

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::InvalidArgument(format!(
                "feature buffer holds {} values, expected {} rows x {dim}",
                features.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 0..{num_classes}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: "dataset features" });
        }
        Ok(Self { features, dim, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Self {
            features,
            dim: self.dim,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn all(&self) -> Batch<'_> {
        Batch { data: self, rows: None }
    }

    pub fn batch<'a>(&'a self, rows: &'a [usize]) -> Result<Batch<'a>> {
        Batch::new(self, rows)
    }
}

/// A non-empty view over selected rows of a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    data: &'a Dataset,
    rows: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn new(data: &'a Dataset, rows: &'a [usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= data.len()) {
            return Err(Error::InvalidArgument(format!("row {r} out of range for {} samples", data.len())));
        }
        Ok(Self { data, rows: Some(rows) })
    }

    pub fn len(&self) -> usize {
        self.rows.map_or(self.data.len(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    pub fn num_classes(&self) -> usize {
        self.data.num_classes
    }

    /// Features and label of the `j`-th sample of the batch.
    pub fn sample(&self, j: usize) -> (&'a [f64], usize) {
        let r = self.rows.map_or(j, |rows| rows[j]);
        (self.data.row(r), self.data.labels[r])
    }
}
