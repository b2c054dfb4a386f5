//! Matching-logits distillation: a multi-output regression tree fitted to
//! teacher logits, read out through a softmax.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cart::{self, CartError, FitParams, Impurity, Targets, Tree, TreeMode};
use crate::datasets::LabeledDataset;
use crate::linalg::Matrix;
use crate::teacher::checkpoint::fingerprint;
use crate::teacher::loss::{argmax, softmax};
use crate::teacher::{LogitMatrix, Network, TeacherError};

mod temperature;

pub use temperature::{matching_logits_gradient, soft_target_gradient, temperature_softmax, ZERO_MEAN_TOLERANCE};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("teacher has {teacher} outputs but the data has {dataset} classes")]
    ArityMismatch { teacher: usize, dataset: usize },
    #[error("{features} feature rows but {logits} logit rows")]
    RowMismatch { features: usize, logits: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("{which} logits must have zero mean, mean is {mean}")]
    NotZeroMean { which: &'static str, mean: f64 },
    #[error("logit vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("student file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Cart(#[from] CartError),
}

/// A regression tree over logits plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    tree: Tree,
    class_names: Vec<String>,
    /// Checkpoint hash of the teacher whose logits were fitted.
    teacher_fingerprint: String,
    dataset: String,
    seed: u64,
}

pub const STUDENT_HEADER: &str = "treedistill-student v1";

impl StudentModel {
    pub fn new(
        tree: Tree,
        class_names: Vec<String>,
        teacher_fingerprint: String,
        dataset: String,
        seed: u64,
    ) -> Result<StudentModel, DistillError> {
        let outputs = match tree.mode() {
            TreeMode::Regress { n_outputs } => n_outputs,
            TreeMode::Classify { .. } => {
                return Err(CartError::ModeMismatch("a student is a regression tree".into()).into())
            }
        };
        if outputs != class_names.len() {
            return Err(DistillError::ArityMismatch {
                teacher: outputs,
                dataset: class_names.len(),
            });
        }
        Ok(StudentModel {
            tree,
            class_names,
            teacher_fingerprint,
            dataset,
            seed,
        })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn teacher_fingerprint(&self) -> &str {
        &self.teacher_fingerprint
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_provenance(mut self, dataset: &str, seed: u64) -> Self {
        self.dataset = dataset.to_string();
        self.seed = seed;
        self
    }

    /// Softmax over the leaf logits and the winning class.
    pub fn predict(&self, x: &[f64]) -> Result<(Vec<f64>, usize), DistillError> {
        student_predict(self, x)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize, DistillError> {
        // softmax is monotone, so the leaf argmax is the class
        Ok(argmax(self.tree.predict(x)?))
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64, DistillError> {
        if data.n_classes() != self.class_names.len() {
            return Err(DistillError::ArityMismatch {
                teacher: self.class_names.len(),
                dataset: data.n_classes(),
            });
        }
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for (row, &label) in data.features().iter_rows().zip(data.labels()) {
            hits += usize::from(self.predict_class(row)? == label);
        }
        Ok(hits as f64 / data.len() as f64)
    }

    /// Provenance header followed by the tree text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{STUDENT_HEADER}").unwrap();
        writeln!(out, "teacher {}", self.teacher_fingerprint).unwrap();
        writeln!(out, "dataset {}", self.dataset).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        writeln!(out, "classes {}", self.class_names.len()).unwrap();
        for name in &self.class_names {
            writeln!(out, "class {name}").unwrap();
        }
        out.push_str(&self.tree.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<StudentModel, DistillError> {
        let mut lines = text.split_inclusive('\n');
        let mut consumed = 0;
        let mut line_no = 0;
        let mut field = |key: &str| -> Result<String, DistillError> {
            line_no += 1;
            let line = lines.next().ok_or_else(|| DistillError::Parse {
                line: line_no,
                message: format!("missing {key}"),
            })?;
            consumed += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if key.is_empty() {
                return Ok(line.to_string());
            }
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| DistillError::Parse {
                    line: line_no,
                    message: format!("expected `{key} ...`, found {line:?}"),
                })
        };
        let header = field("")?;
        if header != STUDENT_HEADER {
            return Err(DistillError::Parse {
                line: 1,
                message: format!("expected {STUDENT_HEADER:?}"),
            });
        }
        let teacher = field("teacher")?;
        let dataset = field("dataset")?;
        let seed = field("seed")?.parse().map_err(|e| DistillError::Parse {
            line: 4,
            message: format!("seed: {e}"),
        })?;
        let n: usize = field("classes")?.parse().map_err(|e| DistillError::Parse {
            line: 5,
            message: format!("classes: {e}"),
        })?;
        let mut names = Vec::with_capacity(n);
        for _ in 0..n {
            names.push(field("class")?);
        }
        let tree = Tree::from_text(&text[consumed..])?;
        StudentModel::new(tree, names, teacher, dataset, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DistillError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| DistillError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StudentModel, DistillError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DistillError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        StudentModel::from_text(&text)
    }
}

/// Leaf logits `k` for `x`, turned into `softmax(k)` and its argmax.
pub fn student_predict(s: &StudentModel, x: &[f64]) -> Result<(Vec<f64>, usize), DistillError> {
    let k = s.tree.predict(x)?;
    Ok((softmax(k), argmax(k)))
}

/// Fits the student on `(features, logits)`; labels play no part. The
/// impurity in `params` is replaced by mean squared error.
pub fn distill_from_logits(
    features: &Matrix,
    logits: &LogitMatrix,
    params: &FitParams,
    parallel: bool,
) -> Result<Tree, DistillError> {
    if features.rows() != logits.len() {
        return Err(DistillError::RowMismatch {
            features: features.rows(),
            logits: logits.len(),
        });
    }
    let params = FitParams {
        impurity: Impurity::Mse,
        ..params.clone()
    };
    Ok(cart::fit_with(
        features,
        Targets::Outputs(logits.values()),
        &params,
        parallel,
    )?)
}

/// Extracts the teacher's logits on `train` and fits a student to them.
pub fn distill(net: &Network, train: &LabeledDataset, params: &FitParams) -> Result<StudentModel, DistillError> {
    if net.n_classes() != train.n_classes() {
        return Err(DistillError::ArityMismatch {
            teacher: net.n_classes(),
            dataset: train.n_classes(),
        });
    }
    let logits = net.extract_logits(train.features())?;
    let tree = distill_from_logits(train.features(), &logits, params, crate::par::available())?;
    StudentModel::new(tree, train.class_names().to_vec(), fingerprint(net), String::new(), 0)
}

/// Outcome of one distillation run.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillRecord {
    pub teacher_accuracy: f64,
    pub student_accuracy: f64,
    pub params: FitParams,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::{Init, LayerSpec, Shape};

    fn leaf_student(value: Vec<f64>) -> StudentModel {
        let k = value.len();
        let text = format!(
            "treedistill-tree v1\nmode regress {k}\nfeatures 1\nparams max_depth=0 min_samples_split=2 min_samples_leaf=1 impurity=mse\nnodes 1\nleaf 1{}\n",
            value.iter().map(|v| format!(" {v:?}")).collect::<String>()
        );
        let tree = Tree::from_text(&text).unwrap();
        StudentModel::new(tree, LabeledDataset::numbered_classes(k), "t".into(), "toy".into(), 0).unwrap()
    }

    #[test]
    fn zero_leaf_is_uniform_class_zero() {
        let (p, c) = leaf_student(vec![0.0; 4]).predict(&[1.0]).unwrap();
        assert_eq!(p, vec![0.25; 4]);
        assert_eq!(c, 0);
    }

    #[test]
    fn softmax_readout() {
        let (p, c) = leaf_student(vec![5.0, 1.0, 1.0]).predict(&[0.0]).unwrap();
        let e = |v: f64| v.exp();
        let want = e(5.0) / (e(5.0) + 2.0 * e(1.0));
        assert!((p[0] - want).abs() < 1e-15);
        assert_eq!(c, 0);
    }

    /// A one-layer "teacher" whose logit gap is `w · x_0`.
    fn linear_teacher(w: f64) -> Network {
        let mut net = Network::build(Shape::flat(2), &[LayerSpec::Dense { units: 2 }], Init::Zeros, 0).unwrap();
        if let Some((weights, _)) = net.layers_mut()[0].params_mut() {
            // weights are inputs × units
            weights[0] = w;
            weights[1] = -w;
        }
        net
    }

    fn toy_data() -> LabeledDataset {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5, (i * 7 % 5) as f64]).collect();
        let labels = (0..20).map(|i| usize::from(i < 10)).collect();
        LabeledDataset::new(Matrix::from_rows(&rows), labels, 2, LabeledDataset::numbered_classes(2)).unwrap()
    }

    #[test]
    fn depth_one_student_matches_threshold_teacher() {
        // logit gap 2·x_0 with a sign change between the 10th and 11th rows
        let net = linear_teacher(1.0);
        let data = toy_data();
        let s = distill(&net, &data, &FitParams::new(Impurity::Gini).with_max_depth(Some(1))).unwrap();
        assert_eq!(s.tree().params().impurity, Impurity::Mse);
        let teacher = net.predict(data.features()).unwrap();
        for (row, t) in data.features().iter_rows().zip(teacher) {
            assert_eq!(s.predict_class(row).unwrap(), t);
        }
        let root = s.tree().root().split.unwrap();
        assert_eq!((root.feature, root.threshold), (0, 0.0));
    }

    #[test]
    fn constant_teacher_gives_a_single_leaf() {
        let net = linear_teacher(0.0);
        let s = distill(&net, &toy_data(), &FitParams::new(Impurity::Mse)).unwrap();
        assert_eq!(s.tree().nodes().len(), 1);
    }

    #[test]
    fn labels_do_not_affect_the_student() {
        let net = linear_teacher(0.7);
        let data = toy_data();
        let shuffled = data.with_labels(data.labels().iter().rev().copied().collect()).unwrap();
        let p = FitParams::new(Impurity::Mse).with_max_depth(Some(3));
        let a = distill(&net, &data, &p).unwrap();
        let b = distill(&net, &shuffled, &p).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn arity_mismatch() {
        let net = linear_teacher(1.0);
        let d = toy_data();
        let three = LabeledDataset::new(
            d.features().clone(),
            d.labels().to_vec(),
            3,
            LabeledDataset::numbered_classes(3),
        )
        .unwrap();
        assert!(matches!(
            distill(&net, &three, &FitParams::new(Impurity::Mse)),
            Err(DistillError::ArityMismatch { teacher: 2, dataset: 3 })
        ));
    }

    #[test]
    fn student_file_round_trip() {
        let net = linear_teacher(0.3);
        let s = distill(&net, &toy_data(), &FitParams::new(Impurity::Mse))
            .unwrap()
            .with_provenance("toy", 7);
        let names = vec!["no win".to_string(), "win".to_string()];
        let s = StudentModel::new(s.tree().clone(), names, s.teacher_fingerprint().into(), "toy".into(), 7).unwrap();
        let back = StudentModel::from_text(&s.to_text()).unwrap();
        assert_eq!(back.to_text(), s.to_text());
        assert_eq!(back.class_names()[0], "no win");
        assert_eq!(back.seed(), 7);
        assert_eq!(back.teacher_fingerprint(), fingerprint(&net));
        assert!(StudentModel::from_text("treedistill-student v1\nteacher x\n").is_err());
    }
}
