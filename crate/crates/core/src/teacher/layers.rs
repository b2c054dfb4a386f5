//! Layer kernels: forward passes, backprop and their caches.
//!
//! A batch is a [`Matrix`] with one instance per row; image tensors are
//! flattened channel-major (`c, h, w`). Weight gradients are reduced over
//! fixed-size chunks of the batch in chunk order, so the parallel and
//! sequential paths produce identical bits.

use rand_distr::{Distribution, StandardNormal};

use super::TeacherError;
use crate::linalg::{gemm, Matrix};
use crate::par;
use crate::rng::SeededRng;

/// Rows per chunk for dense-layer work and gradient partial sums.
const ROW_CHUNK: usize = 64;
/// Images per chunk for convolution gradient partial sums.
const IMAGE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// A plain feature vector.
    pub const fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub const fn size(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Architecture description of one layer; input shapes are inferred.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    /// Square kernel, "same" padding.
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    /// Square block, no padding.
    MaxPool {
        size: usize,
        stride: usize,
    },
    Relu,
    /// `keep_prob` is the probability a unit survives.
    Dropout {
        keep_prob: f64,
    },
    Flatten,
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal(0, std) resampled outside ±2·std; constant bias.
    TruncatedNormal {
        std: f64,
        bias: f64,
    },
    /// Uniform(±sqrt(6 / fan_in)); zero bias.
    HeUniform,
    Zeros,
}

impl Init {
    fn fill(&self, weights: &mut [f64], bias: &mut [f64], fan_in: usize, rng: &mut SeededRng) {
        match *self {
            Init::TruncatedNormal { std, bias: b } => {
                for w in weights.iter_mut() {
                    *w = loop {
                        let z: f64 = StandardNormal.sample(rng.inner());
                        if z.abs() <= 2.0 {
                            break z * std;
                        }
                    };
                }
                bias.fill(b);
            }
            Init::HeUniform => {
                let limit = (6.0 / fan_in as f64).sqrt();
                for w in weights.iter_mut() {
                    *w = (rng.next_f64() * 2.0 - 1.0) * limit;
                }
                bias.fill(0.0);
            }
            Init::Zeros => {
                weights.fill(0.0);
                bias.fill(0.0);
            }
        }
    }
}

/// Fully connected layer, `y = x·W + b` with `W` stored `inputs × units`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// 2-D convolution (cross-correlation) with "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub input: Shape,
    pub output: Shape,
    pub kernel: usize,
    pub stride: usize,
    pad_top: usize,
    pad_left: usize,
    /// `filters × (channels · kernel · kernel)`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool {
    pub input: Shape,
    pub output: Shape,
    pub size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool(MaxPool),
    Relu { shape: Shape },
    Dropout { shape: Shape, keep_prob: f64 },
    Flatten { input: Shape },
}

/// What a training-mode forward pass keeps for backprop.
#[derive(Debug, Clone)]
pub enum Cache {
    Input(Matrix),
    Argmax(Vec<u32>),
    Mask(Vec<f64>),
    Empty,
}

/// Parameter gradients, laid out like the layer's own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

impl Layer {
    /// Builds a layer for `input`, initializing any parameters.
    pub fn build(spec: &LayerSpec, input: Shape, init: Init, rng: &mut SeededRng) -> Result<Layer, TeacherError> {
        let bad = |msg: String| Err(TeacherError::InvalidSpec(msg));
        match *spec {
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return bad("dense layer needs at least one unit".into());
                }
                let inputs = input.size();
                let mut weights = vec![0.0; inputs * units];
                let mut bias = vec![0.0; units];
                init.fill(&mut weights, &mut bias, inputs, rng);
                Ok(Layer::Dense(Dense {
                    inputs,
                    units,
                    weights,
                    bias,
                }))
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
            } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return bad(format!("conv2d needs positive filters/kernel/stride, got {spec:?}"));
                }
                if input.height < kernel || input.width < kernel {
                    return bad(format!(
                        "conv2d kernel {kernel} larger than input {}x{}",
                        input.height, input.width
                    ));
                }
                let (oh, pad_top) = same_padding(input.height, kernel, stride);
                let (ow, pad_left) = same_padding(input.width, kernel, stride);
                let fan_in = input.channels * kernel * kernel;
                let mut weights = vec![0.0; filters * fan_in];
                let mut bias = vec![0.0; filters];
                init.fill(&mut weights, &mut bias, fan_in, rng);
                Ok(Layer::Conv2d(Conv2d {
                    input,
                    output: Shape::new(filters, oh, ow),
                    kernel,
                    stride,
                    pad_top,
                    pad_left,
                    weights,
                    bias,
                }))
            }
            LayerSpec::MaxPool { size, stride } => {
                if size == 0 || stride == 0 {
                    return bad("max pool block and stride must be positive".into());
                }
                let fits = |n: usize| n >= size && (n - size).is_multiple_of(stride);
                if !fits(input.height) || !fits(input.width) {
                    return bad(format!(
                        "max pool {size}x{size}/{stride} does not tile a {}x{} map",
                        input.height, input.width
                    ));
                }
                let output = Shape::new(
                    input.channels,
                    (input.height - size) / stride + 1,
                    (input.width - size) / stride + 1,
                );
                Ok(Layer::MaxPool(MaxPool {
                    input,
                    output,
                    size,
                    stride,
                }))
            }
            LayerSpec::Relu => Ok(Layer::Relu { shape: input }),
            LayerSpec::Dropout { keep_prob } => {
                if !(keep_prob > 0.0 && keep_prob <= 1.0) {
                    return bad(format!("keep probability {keep_prob} outside (0, 1]"));
                }
                Ok(Layer::Dropout {
                    shape: input,
                    keep_prob,
                })
            }
            LayerSpec::Flatten => Ok(Layer::Flatten { input }),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense { units: d.units },
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                filters: c.output.channels,
                kernel: c.kernel,
                stride: c.stride,
            },
            Layer::MaxPool(p) => LayerSpec::MaxPool {
                size: p.size,
                stride: p.stride,
            },
            Layer::Relu { .. } => LayerSpec::Relu,
            Layer::Dropout { keep_prob, .. } => LayerSpec::Dropout { keep_prob: *keep_prob },
            Layer::Flatten { .. } => LayerSpec::Flatten,
        }
    }

    pub fn input_shape(&self) -> Shape {
        match self {
            Layer::Dense(d) => Shape::flat(d.inputs),
            Layer::Conv2d(c) => c.input,
            Layer::MaxPool(p) => p.input,
            Layer::Relu { shape } | Layer::Dropout { shape, .. } => *shape,
            Layer::Flatten { input } => *input,
        }
    }

    pub fn output_shape(&self) -> Shape {
        match self {
            Layer::Dense(d) => Shape::flat(d.units),
            Layer::Conv2d(c) => c.output,
            Layer::MaxPool(p) => p.output,
            Layer::Relu { shape } | Layer::Dropout { shape, .. } => *shape,
            Layer::Flatten { input } => Shape::flat(input.size()),
        }
    }

    /// `(weights, bias)` for parametric layers.
    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            Layer::Conv2d(c) => Some((&c.weights, &c.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            _ => None,
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<(), TeacherError> {
        let want = self.input_shape().size();
        if x.cols() != want {
            return Err(TeacherError::ShapeMismatch {
                expected: want,
                found: x.cols(),
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout is the identity).
    pub fn forward(&self, x: &Matrix, parallel: bool) -> Result<Matrix, TeacherError> {
        self.check_input(x)?;
        Ok(match self {
            Layer::Dense(d) => d.forward(x, parallel),
            Layer::Conv2d(c) => c.forward(x, parallel),
            Layer::MaxPool(p) => p.forward(x, None),
            Layer::Relu { .. } => relu_matrix(x),
            Layer::Dropout { .. } | Layer::Flatten { .. } => x.clone(),
        })
    }

    /// Training-mode forward pass. `rng` drives dropout masks.
    pub fn forward_train(
        &self,
        x: &Matrix,
        rng: &mut SeededRng,
        parallel: bool,
    ) -> Result<(Matrix, Cache), TeacherError> {
        self.check_input(x)?;
        Ok(match self {
            Layer::Dense(d) => (d.forward(x, parallel), Cache::Input(x.clone())),
            Layer::Conv2d(c) => (c.forward(x, parallel), Cache::Input(x.clone())),
            Layer::MaxPool(p) => {
                let mut arg = vec![0u32; x.rows() * p.output.size()];
                let y = p.forward(x, Some(&mut arg));
                (y, Cache::Argmax(arg))
            }
            Layer::Relu { .. } => {
                let mask: Vec<f64> = x.as_slice().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                (relu_matrix(x), Cache::Mask(mask))
            }
            Layer::Dropout { keep_prob, .. } => {
                if *keep_prob >= 1.0 {
                    return Ok((x.clone(), Cache::Empty));
                }
                let scale = 1.0 / keep_prob;
                let mask: Vec<f64> = (0..x.as_slice().len())
                    .map(|_| if rng.next_f64() < *keep_prob { scale } else { 0.0 })
                    .collect();
                let y: Vec<f64> = x.as_slice().iter().zip(&mask).map(|(a, m)| a * m).collect();
                (Matrix::from_vec(x.rows(), x.cols(), y), Cache::Mask(mask))
            }
            Layer::Flatten { .. } => (x.clone(), Cache::Empty),
        })
    }

    /// Backprop through the layer: returns the input gradient and, for
    /// parametric layers, the parameter gradients summed over the batch.
    pub fn backward(&self, cache: &Cache, grad_out: &Matrix, parallel: bool) -> (Matrix, Option<ParamGrads>) {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => {
                let (gx, g) = d.backward(x, grad_out, parallel);
                (gx, Some(g))
            }
            (Layer::Conv2d(c), Cache::Input(x)) => {
                let (gx, g) = c.backward(x, grad_out, parallel);
                (gx, Some(g))
            }
            (Layer::MaxPool(p), Cache::Argmax(arg)) => (p.backward(arg, grad_out), None),
            (Layer::Relu { .. } | Layer::Dropout { .. }, Cache::Mask(mask)) => {
                let g: Vec<f64> = grad_out.as_slice().iter().zip(mask).map(|(g, m)| g * m).collect();
                (Matrix::from_vec(grad_out.rows(), grad_out.cols(), g), None)
            }
            (Layer::Dropout { .. } | Layer::Flatten { .. }, Cache::Empty) => (grad_out.clone(), None),
            (layer, cache) => panic!("cache {cache:?} does not belong to layer {:?}", layer.spec()),
        }
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

fn relu_matrix(x: &Matrix) -> Matrix {
    Matrix::from_vec(x.rows(), x.cols(), relu(x.as_slice()))
}

/// Sums equally-shaped partial gradients in order.
fn reduce_in_order(parts: Vec<ParamGrads>) -> ParamGrads {
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one partial gradient");
    for p in it {
        for (a, b) in acc.weights.iter_mut().zip(&p.weights) {
            *a += b;
        }
        for (a, b) in acc.bias.iter_mut().zip(&p.bias) {
            *a += b;
        }
    }
    acc
}

impl Dense {
    fn forward(&self, x: &Matrix, parallel: bool) -> Matrix {
        let (n_in, n_out) = (self.inputs, self.units);
        let mut y = Matrix::zeros(x.rows(), n_out);
        if x.rows() == 0 {
            return y;
        }
        let xs = x.as_slice();
        par::for_each_chunk_mut(y.as_mut_slice(), ROW_CHUNK * n_out, parallel, |ci, out| {
            let rows = out.len() / n_out;
            for r in out.chunks_exact_mut(n_out) {
                r.copy_from_slice(&self.bias);
            }
            let a = &xs[ci * ROW_CHUNK * n_in..(ci * ROW_CHUNK + rows) * n_in];
            gemm(rows, n_in, n_out, 1.0, a, false, &self.weights, false, 1.0, out);
        });
        y
    }

    fn backward(&self, x: &Matrix, gy: &Matrix, parallel: bool) -> (Matrix, ParamGrads) {
        let (n_in, n_out, b) = (self.inputs, self.units, x.rows());
        let n_chunks = b.div_ceil(ROW_CHUNK).max(1);
        let parts = par::map_range(n_chunks, parallel, |ci| {
            let start = ci * ROW_CHUNK;
            let rows = ROW_CHUNK.min(b - start.min(b));
            let xa = &x.as_slice()[start * n_in..(start + rows) * n_in];
            let ga = &gy.as_slice()[start * n_out..(start + rows) * n_out];
            let mut weights = vec![0.0; n_in * n_out];
            gemm(n_in, rows, n_out, 1.0, xa, true, ga, false, 0.0, &mut weights);
            let mut bias = vec![0.0; n_out];
            for r in ga.chunks_exact(n_out) {
                for (acc, g) in bias.iter_mut().zip(r) {
                    *acc += g;
                }
            }
            ParamGrads { weights, bias }
        });
        let grads = reduce_in_order(parts);

        let mut gx = Matrix::zeros(b, n_in);
        let gys = gy.as_slice();
        par::for_each_chunk_mut(gx.as_mut_slice(), ROW_CHUNK * n_in, parallel, |ci, out| {
            let rows = out.len() / n_in;
            let ga = &gys[ci * ROW_CHUNK * n_out..(ci * ROW_CHUNK + rows) * n_out];
            gemm(rows, n_out, n_in, 1.0, ga, false, &self.weights, true, 0.0, out);
        });
        (gx, grads)
    }
}

impl Conv2d {
    fn patch_len(&self) -> usize {
        self.input.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.output.height * self.output.width
    }

    /// Unrolls one image into `patch_len × positions` columns.
    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let (k, s) = (self.kernel, self.stride);
        let (h, w) = (self.input.height as isize, self.input.width as isize);
        let (oh, ow) = (self.output.height, self.output.width);
        let p = self.positions();
        for c in 0..self.input.channels {
            let plane = &img[c * (h * w) as usize..(c + 1) * (h * w) as usize];
            for a in 0..k {
                for bb in 0..k {
                    let row = &mut cols[((c * k + a) * k + bb) * p..][..p];
                    for i in 0..oh {
                        let y = (i * s + a) as isize - self.pad_top as isize;
                        for j in 0..ow {
                            let xx = (j * s + bb) as isize - self.pad_left as isize;
                            row[i * ow + j] = if y >= 0 && y < h && xx >= 0 && xx < w {
                                plane[(y * w + xx) as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatters column gradients back onto the image (adds into `img`).
    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let (k, s) = (self.kernel, self.stride);
        let (h, w) = (self.input.height as isize, self.input.width as isize);
        let (oh, ow) = (self.output.height, self.output.width);
        let p = self.positions();
        for c in 0..self.input.channels {
            let plane = &mut img[c * (h * w) as usize..(c + 1) * (h * w) as usize];
            for a in 0..k {
                for bb in 0..k {
                    let row = &cols[((c * k + a) * k + bb) * p..][..p];
                    for i in 0..oh {
                        let y = (i * s + a) as isize - self.pad_top as isize;
                        if y < 0 || y >= h {
                            continue;
                        }
                        for j in 0..ow {
                            let xx = (j * s + bb) as isize - self.pad_left as isize;
                            if xx >= 0 && xx < w {
                                plane[(y * w + xx) as usize] += row[i * ow + j];
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Matrix, parallel: bool) -> Matrix {
        let (pl, p, f) = (self.patch_len(), self.positions(), self.output.channels);
        let out_len = self.output.size();
        let mut y = Matrix::zeros(x.rows(), out_len);
        par::for_each_chunk_mut(y.as_mut_slice(), out_len, parallel, |i, out| {
            let mut cols = vec![0.0; pl * p];
            self.im2col(x.row(i), &mut cols);
            for (r, &b) in out.chunks_exact_mut(p).zip(&self.bias) {
                r.fill(b);
            }
            gemm(f, pl, p, 1.0, &self.weights, false, &cols, false, 1.0, out);
        });
        y
    }

    fn backward(&self, x: &Matrix, gy: &Matrix, parallel: bool) -> (Matrix, ParamGrads) {
        let (pl, p, f) = (self.patch_len(), self.positions(), self.output.channels);
        let b = x.rows();
        let n_chunks = b.div_ceil(IMAGE_CHUNK).max(1);
        let parts = par::map_range(n_chunks, parallel, |ci| {
            let mut g = ParamGrads {
                weights: vec![0.0; f * pl],
                bias: vec![0.0; f],
            };
            let mut cols = vec![0.0; pl * p];
            for i in ci * IMAGE_CHUNK..((ci + 1) * IMAGE_CHUNK).min(b) {
                self.im2col(x.row(i), &mut cols);
                let go = gy.row(i);
                gemm(f, p, pl, 1.0, go, false, &cols, true, 1.0, &mut g.weights);
                for (acc, r) in g.bias.iter_mut().zip(go.chunks_exact(p)) {
                    *acc += r.iter().sum::<f64>();
                }
            }
            g
        });
        let grads = reduce_in_order(parts);

        let in_len = self.input.size();
        let mut gx = Matrix::zeros(b, in_len);
        par::for_each_chunk_mut(gx.as_mut_slice(), in_len, parallel, |i, out| {
            let mut dcols = vec![0.0; pl * p];
            gemm(pl, f, p, 1.0, &self.weights, true, gy.row(i), false, 0.0, &mut dcols);
            self.col2im(&dcols, out);
        });
        (gx, grads)
    }
}

impl MaxPool {
    fn forward(&self, x: &Matrix, mut argmax: Option<&mut [u32]>) -> Matrix {
        let (h, w) = (self.input.height, self.input.width);
        let (oh, ow) = (self.output.height, self.output.width);
        let out_len = self.output.size();
        let mut y = Matrix::zeros(x.rows(), out_len);
        for n in 0..x.rows() {
            let img = x.row(n);
            let out = y.row_mut(n);
            for c in 0..self.input.channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let origin = (c * h + i * self.stride) * w + j * self.stride;
                        let mut best = img[origin];
                        let mut best_at = origin;
                        for a in 0..self.size {
                            for bb in 0..self.size {
                                let at = origin + a * w + bb;
                                // strict > keeps the first maximum in scan order
                                if img[at] > best {
                                    best = img[at];
                                    best_at = at;
                                }
                            }
                        }
                        let o = (c * oh + i) * ow + j;
                        out[o] = best;
                        if let Some(arg) = argmax.as_deref_mut() {
                            arg[n * out_len + o] = best_at as u32;
                        }
                    }
                }
            }
        }
        y
    }

    fn backward(&self, argmax: &[u32], gy: &Matrix) -> Matrix {
        let out_len = self.output.size();
        let mut gx = Matrix::zeros(gy.rows(), self.input.size());
        for n in 0..gy.rows() {
            let g = gy.row(n);
            let dst = gx.row_mut(n);
            for (o, &gv) in g.iter().enumerate() {
                dst[argmax[n * out_len + o] as usize] += gv;
            }
        }
        gx
    }
}
