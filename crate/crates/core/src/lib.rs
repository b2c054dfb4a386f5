//! Distilling neural-network teachers into vanilla decision trees.
//!
//! The pipeline trains a teacher network, feeds the training features back
//! through it to collect per-instance logits, and fits a single
//! multi-output regression CART on `(features, logits)`. Test-time class
//! predictions come from a softmax over the tree's leaf vector.
//!
//! Modules map onto the stages of that pipeline:
//!
//! * [`datasets`]: MNIST IDX and Connect-4 loaders, stratified splitting.
//! * [`teacher`]: a small dense/convolutional network with backprop.
//! * [`cart`]: gini/entropy classification trees and MSE multi-output
//!   regression trees.
//! * [`distill`]: the matching-logits student and temperature utilities.
//! * [`experiments`]: depth sweeps, unbounded comparisons and reports.
//!
//! With the default `parallel` feature, data-parallel loops (split search,
//! per-image convolution, depth sweeps) run on rayon. Every such loop has a
//! sequential path selected at runtime, and reductions happen in a fixed
//! order so both paths produce bit-identical results.

pub mod cart;
pub mod datasets;
pub mod distill;
pub mod experiments;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod teacher;

pub use cart::{FitParams, Impurity, Tree};
pub use datasets::LabeledDataset;
pub use distill::StudentModel;
pub use linalg::Matrix;
pub use teacher::{LogitMatrix, Network, TrainConfig};
