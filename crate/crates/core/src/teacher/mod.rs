//! Teacher networks: dense and convolutional layers, backprop, Adam/SGD
//! training and logit extraction.

use std::path::PathBuf;

use thiserror::Error;

pub mod checkpoint;
pub mod layers;
pub mod logits;
pub mod loss;
pub mod network;
pub mod train;

pub use layers::{Init, Layer, LayerSpec, Shape};
pub use logits::LogitMatrix;
pub use loss::{cross_entropy, softmax, softmax_cross_entropy, Targets};
pub use network::{connect4_mlp, mnist_cnn, mnist_mlp, Network};
pub use train::{train, EpochStats, Optimizer, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("expected {expected} input features, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("network has {network} outputs but the dataset has {dataset} classes")]
    ClassMismatch { network: usize, dataset: usize },
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: u64, loss: f64 },
    #[error("non-finite logit at row {row}, column {col}")]
    NonFiniteLogit { row: usize, col: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
