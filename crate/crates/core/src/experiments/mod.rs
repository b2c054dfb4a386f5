//! End-to-end runs: train (or reload) a teacher once, collect its logits,
//! then compare the distilled student with gini and entropy trees.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use thiserror::Error;

use crate::cart::{self, CartError, FitParams, Impurity, Targets, Tree};
use crate::datasets::{DatasetError, LabeledDataset, Partitions};
use crate::distill::{distill_from_logits, DistillError, StudentModel};
use crate::teacher::checkpoint::{self, fingerprint};
use crate::teacher::{train, EpochStats, LogitMatrix, Network, TeacherError};

pub mod config;
pub mod report;

pub use config::{Architecture, ExperimentConfig};
pub use report::{Report, ReportFormat, ReportRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("logits have {logits} rows but the training set has {train}")]
    LogitRows { logits: usize, train: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Cart(#[from] CartError),
    #[error(transparent)]
    Distill(#[from] DistillError),
}

/// A loaded dataset, a trained teacher and the teacher's training logits.
#[derive(Debug)]
pub struct Experiment {
    cfg: ExperimentConfig,
    data: Partitions,
    teacher: Network,
    teacher_accuracy: f64,
    teacher_fingerprint: String,
    logits: LogitMatrix,
}

/// Builds and trains the configured teacher on `train`.
pub fn train_teacher(
    cfg: &ExperimentConfig,
    train_set: &LabeledDataset,
) -> Result<(Network, Vec<EpochStats>), ExperimentError> {
    let (shape, specs, init) = cfg.architecture.layers();
    let mut net = Network::build(shape, &specs, init, config::init_seed(cfg.seed))?;
    let started = Instant::now();
    let history = train(&mut net, train_set, &cfg.train)?;
    info!(
        "trained {} teacher in {:.1}s",
        cfg.architecture.name(),
        started.elapsed().as_secs_f64()
    );
    Ok((net, history))
}

/// Reuses the checkpoint named by [`ExperimentConfig::checkpoint_path`]
/// when present, otherwise trains and saves one.
pub fn load_or_train_teacher(cfg: &ExperimentConfig, train_set: &LabeledDataset) -> Result<Network, ExperimentError> {
    let path = cfg.checkpoint_path();
    if path.exists() {
        info!("loading teacher checkpoint {}", path.display());
        return Ok(checkpoint::load(&path)?);
    }
    let (net, _) = train_teacher(cfg, train_set)?;
    ensure_dir(&cfg.out_dir)?;
    checkpoint::save(&net, &path)?;
    info!("saved teacher checkpoint {}", path.display());
    Ok(net)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

impl Experiment {
    /// Loads data and teacher; `logits` overrides the logit source.
    pub fn prepare(cfg: ExperimentConfig, logits: Option<&Path>) -> Result<Experiment, ExperimentError> {
        let started = Instant::now();
        let data = cfg.dataset.load()?;
        info!(
            "{}: {} train / {} test instances, {} features ({:.1}s)",
            cfg.dataset.kind.name(),
            data.train.len(),
            data.test.len(),
            data.train.n_features(),
            started.elapsed().as_secs_f64()
        );
        let teacher = load_or_train_teacher(&cfg, &data.train)?;
        let logits = match logits {
            Some(path) => Some(LogitMatrix::load_csv(path)?),
            None => None,
        };
        Experiment::from_parts(cfg, data, teacher, logits)
    }

    /// Assembles an experiment from in-memory parts. Without `logits` they
    /// come from the logit cache when enabled, or from the teacher.
    pub fn from_parts(
        cfg: ExperimentConfig,
        data: Partitions,
        teacher: Network,
        logits: Option<LogitMatrix>,
    ) -> Result<Experiment, ExperimentError> {
        let teacher_accuracy = teacher.accuracy(&data.test)?;
        info!("teacher test accuracy {teacher_accuracy:.4}");
        if let Some(floor) = cfg.min_teacher_accuracy {
            if teacher_accuracy < floor {
                warn!("teacher accuracy {teacher_accuracy:.4} is below the configured floor {floor:.4}");
            }
        }
        let teacher_fingerprint = fingerprint(&teacher);
        let logits = match logits {
            Some(l) => l,
            None => cached_logits(&cfg, &teacher, &teacher_fingerprint, &data.train)?,
        };
        if logits.len() != data.train.len() {
            return Err(ExperimentError::LogitRows {
                logits: logits.len(),
                train: data.train.len(),
            });
        }
        if logits.n_classes() != data.train.n_classes() {
            return Err(DistillError::ArityMismatch {
                teacher: logits.n_classes(),
                dataset: data.train.n_classes(),
            }
            .into());
        }
        Ok(Experiment {
            cfg,
            data,
            teacher,
            teacher_accuracy,
            teacher_fingerprint,
            logits,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn data(&self) -> &Partitions {
        &self.data
    }

    pub fn teacher(&self) -> &Network {
        &self.teacher
    }

    pub fn teacher_accuracy(&self) -> f64 {
        self.teacher_accuracy
    }

    pub fn logits(&self) -> &LogitMatrix {
        &self.logits
    }

    fn empty_report(&self) -> Report {
        Report {
            dataset: self.cfg.dataset.kind.name().to_string(),
            architecture: self.cfg.architecture.name().to_string(),
            seed: self.cfg.seed,
            teacher_accuracy: self.teacher_accuracy,
            teacher_fingerprint: self.teacher_fingerprint.clone(),
            rows: Vec::new(),
        }
    }

    /// Student fitted on the teacher logits with depth limit `max_depth`.
    pub fn student(&self, max_depth: Option<usize>) -> Result<StudentModel, ExperimentError> {
        let tree = distill_from_logits(
            self.data.train.features(),
            &self.logits,
            &FitParams::new(Impurity::Mse).with_max_depth(max_depth),
            self.cfg.parallel,
        )?;
        self.wrap_student(tree)
    }

    fn wrap_student(&self, tree: Tree) -> Result<StudentModel, ExperimentError> {
        Ok(StudentModel::new(
            tree,
            self.data.train.class_names().to_vec(),
            self.teacher_fingerprint.clone(),
            self.cfg.dataset.kind.name().to_string(),
            self.cfg.seed,
        )?)
    }

    /// Vanilla classification tree on the true training labels.
    pub fn baseline(&self, impurity: Impurity, max_depth: Option<usize>) -> Result<Tree, ExperimentError> {
        let train = &self.data.train;
        Ok(cart::fit_with(
            train.features(),
            Targets::Classes {
                labels: train.labels(),
                n_classes: train.n_classes(),
            },
            &FitParams::new(impurity).with_max_depth(max_depth),
            self.cfg.parallel,
        )?)
    }

    /// One row per depth, in the order given.
    ///
    /// Each method is grown once to the deepest requested depth and cut
    /// back for the shallower ones, which gives the same trees as separate
    /// fits.
    pub fn depth_sweep(&self, depths: &[usize]) -> Result<(Report, Vec<StudentModel>), ExperimentError> {
        let Some(&deepest) = depths.iter().max() else {
            return Err(ExperimentError::Config("depth list is empty".into()));
        };
        let started = Instant::now();
        let student = self.student(Some(deepest))?;
        let gini = self.baseline(Impurity::Gini, Some(deepest))?;
        let entropy = self.baseline(Impurity::Entropy, Some(deepest))?;
        info!(
            "fitted depth-{deepest} trees in {:.1}s",
            started.elapsed().as_secs_f64()
        );

        let logit_hash = self.logits.content_hash();
        let test = &self.data.test;
        let mut report = self.empty_report();
        let mut students = Vec::with_capacity(depths.len());
        for &d in depths {
            let s = self.wrap_student(student.tree().truncated(d))?;
            let row = ReportRow {
                depth: Some(d),
                acc_student: s.accuracy(test)?,
                acc_gini: gini.truncated(d).accuracy(test)?,
                acc_entropy: Some(entropy.truncated(d).accuracy(test)?),
                logit_hash: logit_hash.clone(),
            };
            info!(
                "depth {d}: student {:.4}, gini {:.4}, entropy {:.4}",
                row.acc_student,
                row.acc_gini,
                row.acc_entropy.unwrap_or(f64::NAN)
            );
            report.rows.push(row);
            students.push(s);
        }
        Ok((report, students))
    }

    /// Student against a gini tree, both grown without a depth limit.
    pub fn unbounded(&self) -> Result<(Report, StudentModel), ExperimentError> {
        let started = Instant::now();
        let student = self.student(None)?;
        let gini = self.baseline(Impurity::Gini, None)?;
        info!(
            "unbounded: student depth {} / {} leaves, gini depth {} / {} leaves ({:.1}s)",
            student.tree().depth(),
            student.tree().n_leaves(),
            gini.depth(),
            gini.n_leaves(),
            started.elapsed().as_secs_f64()
        );
        let mut report = self.empty_report();
        report.rows.push(ReportRow {
            depth: None,
            acc_student: student.accuracy(&self.data.test)?,
            acc_gini: gini.accuracy(&self.data.test)?,
            acc_entropy: None,
            logit_hash: self.logits.content_hash(),
        });
        Ok((report, student))
    }
}

fn cached_logits(
    cfg: &ExperimentConfig,
    teacher: &Network,
    teacher_fingerprint: &str,
    train_set: &LabeledDataset,
) -> Result<LogitMatrix, ExperimentError> {
    let path = cfg.out_dir.join(format!("logits-{}.csv", &teacher_fingerprint[..12]));
    if cfg.logit_cache && path.exists() {
        info!("reusing cached logits {}", path.display());
        return Ok(LogitMatrix::load_csv(&path)?);
    }
    let logits = teacher.extract_logits_with(train_set.features(), cfg.parallel)?;
    if cfg.logit_cache {
        ensure_dir(&cfg.out_dir)?;
        logits.save_csv(&path)?;
        info!("cached logits at {}", path.display());
    }
    Ok(logits)
}

/// Loads everything named by `cfg` and runs the depth sweep.
pub fn run_depth_sweep(cfg: ExperimentConfig) -> Result<Report, ExperimentError> {
    let depths = cfg.depths.clone();
    Ok(Experiment::prepare(cfg, None)?.depth_sweep(&depths)?.0)
}

/// Loads everything named by `cfg` and runs the unbounded comparison.
pub fn run_unbounded(cfg: ExperimentConfig) -> Result<Report, ExperimentError> {
    Ok(Experiment::prepare(cfg, None)?.unbounded()?.0)
}
