//! Benchmark datasets: loading, encoding and deterministic partitioning.

mod cache;
mod connect4;
mod idx;
mod split;

use std::path::PathBuf;

use thiserror::Error;

use crate::linalg::Matrix;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use connect4::{load_connect4, parse_connect4, CONNECT4_CLASSES, CONNECT4_FEATURES};
pub use idx::{load_mnist_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::{mnist_protocol, stratified_split, stratified_split_indices, MnistSplits};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: i/o error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { what: String, expected: u32, found: u32 },
    #[error("{what}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("line {line}, column {column}: unknown cell symbol {symbol:?}")]
    UnknownSymbol { line: usize, column: usize, symbol: String },
    #[error("line {line}: unknown class {token:?}")]
    UnknownClass { line: usize, token: String },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("test size {test_size} leaves no training instances out of {n}")]
    TestSizeTooLarge { test_size: usize, n: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Which benchmark a [`DatasetSpec`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Connect4,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Connect4 => "connect4",
        }
    }
}

/// File locations plus the partitioning parameters for one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub paths: DatasetPaths,
    pub test_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetPaths {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Instances carved off the official training set before training.
        validation_size: usize,
    },
    Connect4 {
        data: PathBuf,
    },
}

/// Train/test partitions ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetSpec {
    /// Loads and partitions the benchmark.
    ///
    /// MNIST keeps the official test file and drops `validation_size`
    /// shuffled instances from the official training file; Connect-4 is
    /// split with [`stratified_split`].
    pub fn load(&self) -> Result<Partitions, DatasetError> {
        match &self.paths {
            DatasetPaths::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                validation_size,
            } => {
                let full_train = load_mnist_idx(train_images, train_labels)?;
                let test = load_mnist_idx(test_images, test_labels)?;
                let splits = mnist_protocol(full_train, *validation_size, self.seed)?;
                Ok(Partitions {
                    train: splits.train,
                    test,
                })
            }
            DatasetPaths::Connect4 { data } => {
                let all = load_connect4(data)?;
                let (train, test) = stratified_split(&all, self.test_size, self.seed)?;
                Ok(Partitions { train, test })
            }
        }
    }
}

/// Feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
    class_names: Vec<String>,
}

impl LabeledDataset {
    /// Validates row counts, label range and finiteness.
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        n_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if features.rows() != labels.len() {
            return Err(DatasetError::Invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if class_names.len() != n_classes {
            return Err(DatasetError::Invalid(format!(
                "{} class names for {n_classes} classes",
                class_names.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(DatasetError::LabelOutOfRange { label, n_classes });
        }
        if !features.all_finite() {
            return Err(DatasetError::Invalid("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            class_names,
        })
    }

    /// Class names `"0".."k-1"`.
    pub fn numbered_classes(n_classes: usize) -> Vec<String> {
        (0..n_classes).map(|c| c.to_string()).collect()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Same features, different labels. Used to check that students ignore labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<LabeledDataset, DatasetError> {
        LabeledDataset::new(self.features.clone(), labels, self.n_classes, self.class_names.clone())
    }

    /// Fraction of the most frequent class; what a constant predictor scores.
    pub fn majority_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let max = self.class_counts().into_iter().max().unwrap_or(0);
        max as f64 / self.len() as f64
    }
}
