//! Datasets, label-noise injection and image augmentation.

mod augment;
mod blobs;
mod csv_file;
mod idx;
mod noise;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use augment::{augment, AugmentPolicy};
pub use blobs::synthetic_blobs;
pub use csv_file::read_csv;
pub use idx::{mnist_subset, read_idx_images, read_idx_labels};
pub use noise::{corrupt_labels, LabelNoise, NoiseSpec};

use crate::error::{Error, Result};
use crate::optim::Batch;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    /// `[N, ...]` with one example per leading index.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        features: Tensor,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if features.shape()[0] != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self {
            name: name.into(),
            split,
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Batch of the given rows, labelled from `labels` (e.g. a noisy view).
    pub fn batch_with_labels(&self, rows: &[usize], labels: &[usize]) -> Batch {
        Batch {
            inputs: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| labels[r]).collect(),
        }
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        self.batch_with_labels(rows, &self.labels)
    }
}

/// Where a train/test pair comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// Gaussian clusters, one per class, around random centres.
    SyntheticBlobs {
        classes: usize,
        dim: usize,
        train: usize,
        test: usize,
        /// Standard deviation of each cluster relative to unit-variance centres.
        spread: f64,
        seed: u64,
    },
    /// IDX image/label files, subsampled to a fixed number per class.
    MnistSubset {
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
        per_class: usize,
        #[serde(default)]
        test_per_class: Option<usize>,
        /// Keep the `[1, H, W]` image layout instead of flattening.
        #[serde(default = "yes")]
        images: bool,
    },
    /// CSV files with a header row, decimal features, integer label last.
    Csv { train: String, test: String },
}

fn yes() -> bool {
    true
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::SyntheticBlobs { .. } => "synthetic-blobs",
            DatasetSpec::MnistSubset { .. } => "mnist-subset",
            DatasetSpec::Csv { .. } => "csv",
        }
    }

    /// Loads `(train, test)`; relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<(Dataset, Dataset)> {
        let at = |p: &str| base.join(p);
        match self {
            DatasetSpec::SyntheticBlobs {
                classes,
                dim,
                train,
                test,
                spread,
                seed,
            } => synthetic_blobs(*classes, *dim, *train, *test, *spread, *seed),
            DatasetSpec::MnistSubset {
                train_images,
                train_labels,
                test_images,
                test_labels,
                per_class,
                test_per_class,
                images,
            } => {
                let train = mnist_subset(
                    &at(train_images),
                    &at(train_labels),
                    Some(*per_class),
                    *images,
                    Split::Train,
                )?;
                let test = mnist_subset(
                    &at(test_images),
                    &at(test_labels),
                    *test_per_class,
                    *images,
                    Split::Test,
                )?;
                Ok((train, test))
            }
            DatasetSpec::Csv { train, test } => {
                let tr = read_csv(&at(train), Split::Train)?;
                let te = read_csv(&at(test), Split::Test)?;
                let classes = tr.classes.max(te.classes);
                Ok((Dataset { classes, ..tr }, Dataset { classes, ..te }))
            }
        }
    }
}
