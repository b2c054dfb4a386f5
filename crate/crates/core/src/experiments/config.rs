//! Experiment configuration files.
//!
//! Configs are TOML: `key = value` lines grouped under `[dataset]`,
//! `[teacher]` and `[experiment]` headers, plus a top-level `seed`.
//! Relative paths resolve against the directory holding the config file.
//!
//! ```toml
//! seed = 42
//!
//! [dataset]
//! kind = "connect4"               # or "mnist"
//! data = "data/connect-4.data"    # connect4 only
//! test_size = 10000               # connect4 only
//! # mnist only:
//! # train_images = "data/mnist/train-images-idx3-ubyte"
//! # train_labels = "data/mnist/train-labels-idx1-ubyte"
//! # test_images = "data/mnist/t10k-images-idx3-ubyte"
//! # test_labels = "data/mnist/t10k-labels-idx1-ubyte"
//! # validation_size = 5000
//!
//! [teacher]
//! architecture = "connect4-mlp"   # "mnist-mlp" | "mnist-cnn"
//! # every key below is optional and defaults to the architecture preset
//! optimizer = "adam"              # or "sgd"
//! learning_rate = 0.001
//! batch_size = 50
//! epochs = 30
//! l2_penalty = 0.0001
//! min_accuracy = 0.80             # warn when the teacher scores lower
//!
//! [experiment]
//! depths = [6, 7, 8, 9, 10]
//! out_dir = "out/connect4"
//! logit_cache = true
//! parallel = true
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::datasets::{DatasetKind, DatasetPaths, DatasetSpec};
use crate::par;
use crate::teacher::layers::{Init, LayerSpec, Shape};
use crate::teacher::{connect4_mlp, mnist_cnn, mnist_mlp, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    MnistCnn,
    MnistMlp,
    Connect4Mlp,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::MnistCnn => "mnist-cnn",
            Architecture::MnistMlp => "mnist-mlp",
            Architecture::Connect4Mlp => "connect4-mlp",
        }
    }

    pub fn layers(self) -> (Shape, Vec<LayerSpec>, Init) {
        match self {
            Architecture::MnistCnn => mnist_cnn(),
            Architecture::MnistMlp => mnist_mlp(),
            Architecture::Connect4Mlp => connect4_mlp(),
        }
    }

    pub fn default_training(self, seed: u64) -> TrainConfig {
        match self {
            Architecture::MnistCnn => TrainConfig::mnist_cnn(seed),
            Architecture::MnistMlp => TrainConfig::mnist_mlp(seed),
            Architecture::Connect4Mlp => TrainConfig::connect4_mlp(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub architecture: Architecture,
    pub train: TrainConfig,
    /// Teacher test accuracy below this logs a warning.
    pub min_teacher_accuracy: Option<f64>,
    pub depths: Vec<usize>,
    pub out_dir: PathBuf,
    pub logit_cache: bool,
    pub parallel: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    dataset: RawDataset,
    teacher: RawTeacher,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    kind: String,
    data: Option<PathBuf>,
    test_size: Option<usize>,
    train_images: Option<PathBuf>,
    train_labels: Option<PathBuf>,
    test_images: Option<PathBuf>,
    test_labels: Option<PathBuf>,
    validation_size: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTeacher {
    architecture: Architecture,
    optimizer: Option<String>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    l2_penalty: Option<f64>,
    min_accuracy: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    depths: Option<Vec<usize>>,
    out_dir: Option<PathBuf>,
    logit_cache: Option<bool>,
    parallel: Option<bool>,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DEPTHS: [usize; 5] = [6, 7, 8, 9, 10];

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<ExperimentConfig, ExperimentError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let seed = raw.seed.unwrap_or(DEFAULT_SEED);
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let need = |p: Option<PathBuf>, key: &str| {
            p.map(resolve)
                .ok_or_else(|| invalid(format!("[dataset] needs `{key}`")))
        };

        let d = raw.dataset;
        let dataset = match d.kind.as_str() {
            "mnist" => DatasetSpec {
                kind: DatasetKind::Mnist,
                paths: DatasetPaths::Mnist {
                    train_images: need(d.train_images, "train_images")?,
                    train_labels: need(d.train_labels, "train_labels")?,
                    test_images: need(d.test_images, "test_images")?,
                    test_labels: need(d.test_labels, "test_labels")?,
                    validation_size: d.validation_size.unwrap_or(5000),
                },
                test_size: 10_000,
                seed,
            },
            "connect4" => DatasetSpec {
                kind: DatasetKind::Connect4,
                paths: DatasetPaths::Connect4 {
                    data: need(d.data, "data")?,
                },
                test_size: d.test_size.unwrap_or(10_000),
                seed,
            },
            other => return Err(invalid(format!("unknown dataset kind {other:?}"))),
        };

        let t = raw.teacher;
        let mut train = t.architecture.default_training(seed);
        let lr = t.learning_rate.unwrap_or(match train.optimizer {
            Optimizer::Adam { lr, .. } | Optimizer::Sgd { lr } => lr,
        });
        train.optimizer = match t.optimizer.as_deref() {
            None | Some("adam") => Optimizer::adam(lr),
            Some("sgd") => Optimizer::Sgd { lr },
            Some(other) => return Err(invalid(format!("unknown optimizer {other:?}"))),
        };
        if let Some(b) = t.batch_size {
            train.batch_size = b;
        }
        if let Some(e) = t.epochs {
            train.epochs = e;
        }
        if let Some(l2) = t.l2_penalty {
            train.l2_penalty = l2;
        }
        let parallel = raw.experiment.parallel.unwrap_or(true) && par::available();
        train.parallel = parallel;
        train.validate().map_err(|e| invalid(e.to_string()))?;

        let e = raw.experiment;
        let cfg = ExperimentConfig {
            seed,
            dataset,
            architecture: t.architecture,
            train,
            min_teacher_accuracy: t.min_accuracy,
            depths: e.depths.unwrap_or_else(|| DEFAULT_DEPTHS.to_vec()),
            out_dir: resolve(e.out_dir.unwrap_or_else(|| PathBuf::from("out"))),
            logit_cache: e.logit_cache.unwrap_or(true),
            parallel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.depths.is_empty() {
            return Err(invalid("depth list is empty"));
        }
        if self.depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("depths must be strictly ascending"));
        }
        let arch_is_mnist = self.architecture != Architecture::Connect4Mlp;
        if arch_is_mnist != (self.dataset.kind == DatasetKind::Mnist) {
            return Err(invalid(format!(
                "architecture {} does not fit dataset {}",
                self.architecture.name(),
                self.dataset.kind.name()
            )));
        }
        Ok(())
    }

    /// Replaces the master seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Short hash of everything that determines the trained teacher;
    /// names the checkpoint file so a changed config never reuses it.
    pub fn teacher_key(&self) -> String {
        let t = &self.train;
        let desc = format!(
            "{:?}|{:?}|{}|{:?}|{}|{}|{}|{}",
            self.dataset.kind,
            self.dataset.paths,
            self.dataset.test_size,
            self.architecture,
            self.seed,
            t.batch_size,
            t.epochs,
            t.l2_penalty,
        ) + &format!("|{:?}", t.optimizer);
        let digest = Sha256::digest(desc.as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join(format!("teacher-{}.bin", self.teacher_key()))
    }
}

/// Seeds used to initialize the teacher weights; training shuffles use
/// the master seed itself.
pub fn init_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_1417
}
