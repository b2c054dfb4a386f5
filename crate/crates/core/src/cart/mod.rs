//! CART: binary axis-aligned trees for classification (gini, entropy) and
//! multi-output regression (mean squared error).

use std::fmt;

use thiserror::Error;

use crate::datasets::LabeledDataset;
use crate::linalg::Matrix;

mod fit;
pub mod impurity;
mod serialize;
mod split;

pub use fit::{fit, fit_with};
pub use impurity::{entropy_from_counts, gini_from_counts, impurity_entropy, impurity_gini, impurity_mse};
pub use split::{best_split, best_split_with};

#[derive(Debug, Error)]
pub enum CartError {
    #[error("empty sample set")]
    Empty,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{features} feature rows but {targets} targets")]
    RowMismatch { features: usize, targets: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("{0}")]
    ModeMismatch(String),
    #[error("non-finite {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },
    #[error("invalid fit parameters: {0}")]
    InvalidParams(String),
    #[error("tree text line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Impurity {
    Gini,
    Entropy,
    Mse,
}

impl Impurity {
    pub fn name(self) -> &'static str {
        match self {
            Impurity::Gini => "gini",
            Impurity::Entropy => "entropy",
            Impurity::Mse => "mse",
        }
    }

    pub fn parse(s: &str) -> Option<Impurity> {
        match s {
            "gini" => Some(Impurity::Gini),
            "entropy" => Some(Impurity::Entropy),
            "mse" => Some(Impurity::Mse),
            _ => None,
        }
    }

    pub fn is_classification(self) -> bool {
        self != Impurity::Mse
    }
}

impl fmt::Display for Impurity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    /// `None` grows until the other stop conditions fire.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub impurity: Impurity,
}

impl FitParams {
    pub fn new(impurity: Impurity) -> Self {
        FitParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            impurity,
        }
    }

    pub fn with_max_depth(mut self, depth: Option<usize>) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn validate(&self) -> Result<(), CartError> {
        if self.min_samples_split < 2 {
            return Err(CartError::InvalidParams("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(CartError::InvalidParams("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// Training targets: class labels or one real vector per sample.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Outputs(&'a Matrix),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Outputs(z) => z.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn check_inputs(x: &Matrix, y: &Targets<'_>, params: &FitParams) -> Result<(), CartError> {
    if x.rows() == 0 {
        return Err(CartError::Empty);
    }
    if x.rows() != y.len() {
        return Err(CartError::RowMismatch {
            features: x.rows(),
            targets: y.len(),
        });
    }
    if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(CartError::NonFinite {
            what: "feature",
            row: pos / x.cols().max(1),
        });
    }
    match *y {
        Targets::Classes { labels, n_classes } => {
            if !params.impurity.is_classification() {
                return Err(CartError::ModeMismatch("mse impurity needs real-valued targets".into()));
            }
            if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
                return Err(CartError::LabelOutOfRange { label, n_classes });
            }
        }
        Targets::Outputs(z) => {
            if params.impurity.is_classification() {
                return Err(CartError::ModeMismatch(format!(
                    "{} impurity needs class labels",
                    params.impurity
                )));
            }
            if z.cols() == 0 {
                return Err(CartError::ModeMismatch("targets have no outputs".into()));
            }
            if let Some(pos) = z.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(CartError::NonFinite {
                    what: "target",
                    row: pos / z.cols(),
                });
            }
        }
    }
    Ok(())
}

/// Result of a split search: send `x[feature] <= threshold` left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// `(M_l/M)·I_l + (M_r/M)·I_r`.
    pub weighted_impurity: f64,
    pub left_count: usize,
    pub right_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMode {
    Classify { n_classes: usize },
    Regress { n_outputs: usize },
}

impl TreeMode {
    pub fn arity(self) -> usize {
        match self {
            TreeMode::Classify { n_classes } => n_classes,
            TreeMode::Regress { n_outputs } => n_outputs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

/// A node of the arena. Internal nodes keep the value they would predict
/// as a leaf, so a tree can be cut back to a smaller depth.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub split: Option<Split>,
    /// Class proportions or mean target vector.
    pub value: Vec<f64>,
    pub n_samples: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    mode: TreeMode,
    n_features: usize,
    params: FitParams,
}

impl Tree {
    pub(crate) fn from_parts(nodes: Vec<TreeNode>, mode: TreeMode, n_features: usize, params: FitParams) -> Tree {
        Tree {
            nodes,
            mode,
            n_features,
            params,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// The root is always node 0.
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn mode(&self) -> TreeMode {
        self.mode
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &FitParams {
        &self.params
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Depth of every node, root at 0.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if let Some(s) = self.nodes[i].split {
                depth[s.left] = depth[i] + 1;
                depth[s.right] = depth[i] + 1;
            }
        }
        depth
    }

    /// Length of the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.node_depths().into_iter().max().unwrap_or(0)
    }

    /// Index of the leaf reached by `x`.
    pub fn apply(&self, x: &[f64]) -> Result<usize, CartError> {
        if x.len() != self.n_features {
            return Err(CartError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature] <= s.threshold { s.left } else { s.right };
        }
        Ok(i)
    }

    /// Leaf vector reached by `x`.
    pub fn predict(&self, x: &[f64]) -> Result<&[f64], CartError> {
        Ok(&self.nodes[self.apply(x)?].value)
    }

    /// Argmax of the leaf class proportions, lowest class on ties.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize, CartError> {
        if !matches!(self.mode, TreeMode::Classify { .. }) {
            return Err(CartError::ModeMismatch(
                "predict_class needs a classification tree".into(),
            ));
        }
        Ok(crate::teacher::loss::argmax(self.predict(x)?))
    }

    /// `predict` for every row, as a `rows × arity` matrix.
    pub fn predict_matrix(&self, x: &Matrix) -> Result<Matrix, CartError> {
        let k = self.mode.arity();
        let mut out = Vec::with_capacity(x.rows() * k);
        for row in x.iter_rows() {
            out.extend_from_slice(self.predict(row)?);
        }
        Ok(Matrix::from_vec(x.rows(), k, out))
    }

    /// Classification accuracy on a labeled set.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64, CartError> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for (row, &label) in data.features().iter_rows().zip(data.labels()) {
            hits += usize::from(self.predict_class(row)? == label);
        }
        Ok(hits as f64 / data.len() as f64)
    }

    /// The tree a fit with `max_depth` would have grown: splits below
    /// `max_depth` are dropped and their parents become leaves.
    ///
    /// Greedy growth decides each split from the node's samples alone, so
    /// cutting a deeper tree yields exactly the shallower fit.
    pub fn truncated(&self, max_depth: usize) -> Tree {
        if self.params.max_depth.is_some_and(|d| d <= max_depth) {
            return self.clone();
        }
        let mut nodes = Vec::new();
        // (old index, depth, new parent slot to patch)
        let mut stack = vec![(0usize, 0usize, None::<(usize, bool)>)];
        while let Some((old, depth, parent)) = stack.pop() {
            let src = &self.nodes[old];
            let new = nodes.len();
            nodes.push(TreeNode {
                split: None,
                value: src.value.clone(),
                n_samples: src.n_samples,
            });
            if let Some((p, is_left)) = parent {
                let s: &mut Split = nodes[p].split.as_mut().expect("parent is internal");
                if is_left {
                    s.left = new;
                } else {
                    s.right = new;
                }
            }
            if let (Some(s), true) = (src.split, depth < max_depth) {
                nodes[new].split = Some(Split {
                    left: usize::MAX,
                    right: usize::MAX,
                    ..s
                });
                stack.push((s.right, depth + 1, Some((new, false))));
                stack.push((s.left, depth + 1, Some((new, true))));
            }
        }
        Tree {
            nodes,
            mode: self.mode,
            n_features: self.n_features,
            params: self.params.clone().with_max_depth(Some(max_depth)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> Tree {
        let leaf = |v: Vec<f64>, n| TreeNode {
            split: None,
            value: v,
            n_samples: n,
        };
        Tree::from_parts(
            vec![
                TreeNode {
                    split: Some(Split {
                        feature: 0,
                        threshold: 2.0,
                        left: 1,
                        right: 2,
                    }),
                    value: vec![0.5, 0.5],
                    n_samples: 4,
                },
                leaf(vec![1.0, 0.0], 2),
                leaf(vec![0.0, 1.0], 2),
            ],
            TreeMode::Classify { n_classes: 2 },
            1,
            FitParams::new(Impurity::Gini),
        )
    }

    #[test]
    fn threshold_value_goes_left() {
        let t = stump();
        assert_eq!(t.predict_class(&[2.0]).unwrap(), 0);
        assert_eq!(t.predict_class(&[2.0000001]).unwrap(), 1);
    }

    #[test]
    fn predict_checks_dimension() {
        assert!(matches!(
            stump().predict(&[1.0, 2.0]),
            Err(CartError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn class_ties_go_to_lowest_index() {
        let t = stump().truncated(0);
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict_class(&[9.0]).unwrap(), 0);
        let three = Tree::from_parts(
            vec![TreeNode {
                split: None,
                value: vec![0.2, 0.5, 0.3],
                n_samples: 10,
            }],
            TreeMode::Classify { n_classes: 3 },
            1,
            FitParams::new(Impurity::Gini),
        );
        assert_eq!(three.predict_class(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn predict_class_rejects_regression_trees() {
        let t = Tree::from_parts(
            vec![TreeNode {
                split: None,
                value: vec![0.0],
                n_samples: 1,
            }],
            TreeMode::Regress { n_outputs: 1 },
            1,
            FitParams::new(Impurity::Mse),
        );
        assert!(matches!(t.predict_class(&[0.0]), Err(CartError::ModeMismatch(_))));
    }

    #[test]
    fn invalid_params() {
        let mut p = FitParams::new(Impurity::Gini);
        p.min_samples_split = 1;
        assert!(p.validate().is_err());
        let mut p = FitParams::new(Impurity::Gini);
        p.min_samples_leaf = 0;
        assert!(p.validate().is_err());
    }
}
