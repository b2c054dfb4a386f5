use log::info;

use super::layers::Layer;
use super::loss::{argmax, softmax_cross_entropy, Targets};
use super::{Network, TeacherError};
use crate::datasets::LabeledDataset;
use crate::linalg::Matrix;
use crate::par;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    /// Coefficient λ of the `λ·Σ‖W‖²` weight penalty.
    pub l2_penalty: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl TrainConfig {
    pub fn mnist_cnn(seed: u64) -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(1e-4),
            batch_size: 50,
            epochs: 10,
            l2_penalty: 0.0,
            seed,
            parallel: par::available(),
        }
    }

    pub fn mnist_mlp(seed: u64) -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(1e-4),
            batch_size: 50,
            epochs: 10,
            l2_penalty: 1e-4,
            seed,
            parallel: par::available(),
        }
    }

    pub fn connect4_mlp(seed: u64) -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(1e-3),
            batch_size: 50,
            epochs: 30,
            l2_penalty: 1e-4,
            seed,
            parallel: par::available(),
        }
    }

    pub fn validate(&self) -> Result<(), TeacherError> {
        let bad = |m: &str| Err(TeacherError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2 penalty must be a finite non-negative number");
        }
        let lr = match self.optimizer {
            Optimizer::Sgd { lr } => lr,
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                    return bad("adam needs 0 <= beta < 1 and epsilon > 0");
                }
                lr
            }
        };
        if !(lr >= 0.0 && lr.is_finite()) {
            return bad("learning rate must be a finite non-negative number");
        }
        Ok(())
    }
}

/// Loss and logits of one minibatch step (before the update).
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub logits: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy of the training-mode predictions seen during the epoch.
    pub train_accuracy: f64,
}

/// Optimizer state bound to one network's parameter layout.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    /// First and second moments, one pair per weight/bias tensor.
    moments: Vec<(Vec<f64>, Vec<f64>)>,
    steps: u64,
}

impl Trainer {
    pub fn new(net: &Network, cfg: TrainConfig) -> Result<Trainer, TeacherError> {
        cfg.validate()?;
        let moments = net
            .layers()
            .iter()
            .filter_map(Layer::params)
            .flat_map(|(w, b)| [w.len(), b.len()])
            .map(|n| (vec![0.0; n], vec![0.0; n]))
            .collect();
        Ok(Trainer { cfg, moments, steps: 0 })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One forward/backward/update on a minibatch. The reported loss
    /// includes the weight penalty.
    pub fn step(
        &mut self,
        net: &mut Network,
        x: &Matrix,
        targets: Targets<'_>,
        rng: &mut SeededRng,
    ) -> Result<StepOutput, TeacherError> {
        let parallel = self.cfg.parallel;
        let (logits, caches) = net.forward_train(x, rng, parallel)?;
        if !logits.all_finite() {
            return Err(TeacherError::Diverged {
                step: self.steps,
                loss: f64::NAN,
            });
        }
        let (data_loss, grad) = softmax_cross_entropy(&logits, targets);
        let lambda = self.cfg.l2_penalty;
        let loss = data_loss
            + if lambda > 0.0 {
                lambda * net.weight_norm_sq()
            } else {
                0.0
            };
        if !loss.is_finite() {
            return Err(TeacherError::Diverged { step: self.steps, loss });
        }
        let grads = net.backward(&caches, &grad, parallel);
        self.steps += 1;
        let t = self.steps as i32;

        let mut slot = 0;
        for (layer, g) in net.layers_mut().iter_mut().zip(grads) {
            let (Some((w, b)), Some(g)) = (layer.params_mut(), g) else {
                continue;
            };
            for (k, (params, grad)) in [(w, g.weights), (b, g.bias)].into_iter().enumerate() {
                let decay = if k == 0 { 2.0 * lambda } else { 0.0 };
                let (m, v) = &mut self.moments[slot];
                slot += 1;
                match self.cfg.optimizer {
                    Optimizer::Sgd { lr } => {
                        for (p, g) in params.iter_mut().zip(&grad) {
                            *p = flush(*p - lr * (g + decay * *p));
                        }
                    }
                    Optimizer::Adam {
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                    } => {
                        let c1 = 1.0 - beta1.powi(t);
                        let c2 = 1.0 - beta2.powi(t);
                        for (((p, g), mi), vi) in params.iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                            let g = g + decay * *p;
                            *mi = flush(beta1 * *mi + (1.0 - beta1) * g);
                            *vi = flush(beta2 * *vi + (1.0 - beta2) * g * g);
                            *p = flush(*p - lr * (*mi / c1) / ((*vi / c2).sqrt() + epsilon));
                        }
                    }
                }
            }
        }
        Ok(StepOutput { loss, logits })
    }
}

/// Subnormals to zero. Weights of dead units shrink geometrically under the
/// L2 term and would otherwise sit in the subnormal range, where every
/// multiply is an order of magnitude slower.
fn flush(x: f64) -> f64 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}

/// Minibatch training on hard labels with a seeded shuffle per epoch.
pub fn train(net: &mut Network, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>, TeacherError> {
    if data.n_classes() != net.n_classes() {
        return Err(TeacherError::ClassMismatch {
            network: net.n_classes(),
            dataset: data.n_classes(),
        });
    }
    if data.n_features() != net.input_shape().size() {
        return Err(TeacherError::ShapeMismatch {
            expected: net.input_shape().size(),
            found: data.n_features(),
        });
    }
    let mut trainer = Trainer::new(net, cfg.clone())?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let x = data.features().select_rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
            let out = trainer.step(net, &x, Targets::Labels(&labels), &mut rng)?;
            loss_sum += out.loss * idx.len() as f64;
            hits += out
                .logits
                .iter_rows()
                .zip(&labels)
                .filter(|(z, &l)| argmax(z) == l)
                .count();
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / data.len().max(1) as f64,
            train_accuracy: hits as f64 / data.len().max(1) as f64,
        };
        info!(
            "epoch {}/{}: loss {:.5}, train accuracy {:.4}",
            stats.epoch, cfg.epochs, stats.mean_loss, stats.train_accuracy
        );
        history.push(stats);
    }
    Ok(history)
}
