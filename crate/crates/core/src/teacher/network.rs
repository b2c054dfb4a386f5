use super::layers::{Cache, Init, Layer, LayerSpec, ParamGrads, Shape};
use super::loss::argmax;
use super::{LogitMatrix, TeacherError};
use crate::datasets::LabeledDataset;
use crate::linalg::Matrix;
use crate::par;
use crate::rng::SeededRng;

/// Rows pushed through the network at once during inference.
const INFERENCE_BATCH: usize = 500;

/// A feed-forward stack of layers ending in a logit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input: Shape,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds the stack, checking that every layer accepts the previous
    /// layer's output and that the last layer yields a flat logit vector.
    pub fn build(input: Shape, specs: &[LayerSpec], init: Init, seed: u64) -> Result<Network, TeacherError> {
        if input.size() == 0 {
            return Err(TeacherError::InvalidSpec("input shape is empty".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut shape = input;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = Layer::build(spec, shape, init, &mut rng)?;
            shape = layer.output_shape();
            layers.push(layer);
        }
        match layers.last() {
            Some(Layer::Dense(_)) => {}
            _ => return Err(TeacherError::InvalidSpec("the last layer must be dense".into())),
        }
        Ok(Network { input, layers })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_shape().size())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// `Σ‖W‖²` over weight tensors (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, _)| w.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Inference-mode logits for a batch.
    pub fn forward(&self, batch: &Matrix, parallel: bool) -> Result<Matrix, TeacherError> {
        let mut x = self.layers[0].forward(batch, parallel)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&x, parallel)?;
        }
        Ok(x)
    }

    /// Training-mode logits plus the per-layer caches for [`Self::backward`].
    pub fn forward_train(
        &self,
        batch: &Matrix,
        rng: &mut SeededRng,
        parallel: bool,
    ) -> Result<(Matrix, Vec<Cache>), TeacherError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward_train(&x, rng, parallel)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    /// Backprop from logit gradients; one entry per layer, `None` for
    /// layers without parameters.
    pub fn backward(&self, caches: &[Cache], grad_logits: &Matrix, parallel: bool) -> Vec<Option<ParamGrads>> {
        self.backward_to_input(caches, grad_logits, parallel).0
    }

    /// Like [`Self::backward`], also returning the gradient at the input.
    pub fn backward_to_input(
        &self,
        caches: &[Cache],
        grad_logits: &Matrix,
        parallel: bool,
    ) -> (Vec<Option<ParamGrads>>, Matrix) {
        let mut grads = vec![None; self.layers.len()];
        let mut g = grad_logits.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gx, pg) = layer.backward(&caches[i], &g, parallel);
            grads[i] = pg;
            g = gx;
        }
        (grads, g)
    }

    /// Inference-mode logits for every row of `features`.
    pub fn extract_logits(&self, features: &Matrix) -> Result<LogitMatrix, TeacherError> {
        self.extract_logits_with(features, par::available())
    }

    pub fn extract_logits_with(&self, features: &Matrix, parallel: bool) -> Result<LogitMatrix, TeacherError> {
        let want = self.input.size();
        if features.cols() != want {
            return Err(TeacherError::ShapeMismatch {
                expected: want,
                found: features.cols(),
            });
        }
        let n = features.rows();
        let k = self.n_classes();
        let mut out = Vec::with_capacity(n * k);
        for start in (0..n).step_by(INFERENCE_BATCH) {
            let batch = features.slice_rows(start, (start + INFERENCE_BATCH).min(n));
            out.extend_from_slice(self.forward(&batch, parallel)?.as_slice());
        }
        LogitMatrix::new(Matrix::from_vec(n, k, out))
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>, TeacherError> {
        Ok(self
            .extract_logits(features)?
            .values()
            .iter_rows()
            .map(argmax)
            .collect())
    }

    /// Fraction of `data` whose argmax logit matches the label.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64, TeacherError> {
        if data.n_classes() != self.n_classes() {
            return Err(TeacherError::ClassMismatch {
                network: self.n_classes(),
                dataset: data.n_classes(),
            });
        }
        if data.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(data.features())?;
        let hits = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / data.len() as f64)
    }
}

/// Convolutional MNIST teacher: two 5×5 conv/pool stages, a 1024-unit
/// dense layer with dropout, 10 logits.
pub fn mnist_cnn() -> (Shape, Vec<LayerSpec>, Init) {
    use LayerSpec::*;
    let specs = vec![
        Conv2d {
            filters: 32,
            kernel: 5,
            stride: 1,
        },
        Relu,
        MaxPool { size: 2, stride: 2 },
        Conv2d {
            filters: 64,
            kernel: 5,
            stride: 1,
        },
        Relu,
        MaxPool { size: 2, stride: 2 },
        Flatten,
        Dense { units: 1024 },
        Relu,
        Dropout { keep_prob: 0.5 },
        Dense { units: 10 },
    ];
    (
        Shape::new(1, 28, 28),
        specs,
        Init::TruncatedNormal { std: 0.1, bias: 0.1 },
    )
}

/// Fully connected MNIST teacher with two 1024-unit hidden layers, each
/// followed by dropout at keep probability 0.5.
pub fn mnist_mlp() -> (Shape, Vec<LayerSpec>, Init) {
    use LayerSpec::*;
    let specs = vec![
        Dense { units: 1024 },
        Relu,
        Dropout { keep_prob: 0.5 },
        Dense { units: 1024 },
        Relu,
        Dropout { keep_prob: 0.5 },
        Dense { units: 10 },
    ];
    (Shape::flat(784), specs, Init::HeUniform)
}

/// Connect-4 teacher: 256-128-128 ReLU stack with dropout after each
/// hidden layer, 3 logits.
pub fn connect4_mlp() -> (Shape, Vec<LayerSpec>, Init) {
    use LayerSpec::*;
    let specs = vec![
        Dense { units: 256 },
        Relu,
        Dropout { keep_prob: 0.8 },
        Dense { units: 128 },
        Relu,
        Dropout { keep_prob: 0.8 },
        Dense { units: 128 },
        Relu,
        Dropout { keep_prob: 0.8 },
        Dense { units: 3 },
    ];
    (Shape::flat(42), specs, Init::HeUniform)
}
