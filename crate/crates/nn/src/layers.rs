//! Layer kinds with forward and backward passes.
//!
//! Inputs carry a leading batch axis. Dense layers take `[B, F]`;
//! convolution and pooling take `[B, C, H, W]`; batch norm normalises per
//! feature on `[B, F]` and per channel on `[B, C, H, W]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gemm::gemm;
use crate::{shape_err, NnError, Result, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `planes` is the number of stacked real planes (e.g. re/im) the
    /// output represents; it only affects weight accounting.
    FullyConnected {
        out_dim: usize,
        #[serde(default = "one")]
        planes: usize,
    },
    BatchNorm,
    Dropout { rate: f64 },
    LeakyRelu { slope: f64 },
    Conv2d { kernel_h: usize, kernel_w: usize, out_channels: usize },
    MaxPool { kernel_h: usize, kernel_w: usize },
    Flatten,
}

/// Per-sample shape plus the plane multiplicity used for weight accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleShape {
    pub dims: Vec<usize>,
    pub planes: usize,
}

impl SampleShape {
    pub fn input(dims: &[usize]) -> Self {
        let planes = if dims.len() >= 2 { dims[0] } else { 1 };
        Self { dims: dims.to_vec(), planes }
    }

    pub fn features(&self) -> usize {
        self.dims.iter().product()
    }
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::BatchNorm => "batch_norm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn output_shape(&self, input: &SampleShape) -> Result<SampleShape> {
        let err = |d: String| Err(shape_err(self.name(), d));
        match *self {
            LayerSpec::FullyConnected { out_dim, planes } => {
                if input.dims.len() != 1 {
                    return err(format!("expects a flat input, got {:?}", input.dims));
                }
                if out_dim == 0 || planes == 0 || out_dim % planes != 0 {
                    return err(format!("out_dim {out_dim} is not a positive multiple of {planes} planes"));
                }
                if input.dims[0] % input.planes != 0 {
                    return err(format!("{} features do not split into {} planes", input.dims[0], input.planes));
                }
                Ok(SampleShape { dims: vec![out_dim], planes })
            }
            LayerSpec::BatchNorm => match input.dims.len() {
                1 | 3 => Ok(input.clone()),
                _ => err(format!("expects [F] or [C, H, W], got {:?}", input.dims)),
            },
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return err(format!("rate {rate} outside [0, 1)"));
                }
                Ok(input.clone())
            }
            LayerSpec::LeakyRelu { .. } => Ok(input.clone()),
            LayerSpec::Conv2d { kernel_h, kernel_w, out_channels } => {
                if input.dims.len() != 3 {
                    return err(format!("expects [C, H, W], got {:?}", input.dims));
                }
                if kernel_h == 0 || kernel_w == 0 || out_channels == 0 {
                    return err("zero kernel or channel size".into());
                }
                Ok(SampleShape { dims: vec![out_channels, input.dims[1], input.dims[2]], planes: out_channels })
            }
            LayerSpec::MaxPool { kernel_h, kernel_w } => {
                if input.dims.len() != 3 {
                    return err(format!("expects [C, H, W], got {:?}", input.dims));
                }
                if kernel_h == 0 || kernel_w == 0 {
                    return err("zero pooling window".into());
                }
                Ok(input.clone())
            }
            LayerSpec::Flatten => Ok(SampleShape { dims: vec![input.features()], planes: input.planes }),
        }
    }

    /// Weights counted per plane: kernels count `kh * kw * out_channels`,
    /// dense layers count `(in / in_planes) * (out / out_planes)`; biases
    /// and batch-norm affine parameters are not counted.
    pub fn counted_weights(&self, input: &SampleShape) -> usize {
        match *self {
            LayerSpec::FullyConnected { out_dim, planes } => (input.features() / input.planes) * (out_dim / planes),
            LayerSpec::Conv2d { kernel_h, kernel_w, out_channels } => kernel_h * kernel_w * out_channels,
            _ => 0,
        }
    }

    pub(crate) fn instantiate(&self, input: &SampleShape, rng: &mut ChaCha8Rng) -> Layer {
        match *self {
            LayerSpec::FullyConnected { out_dim, .. } => Layer::Dense(Dense::new(input.features(), out_dim, rng)),
            LayerSpec::BatchNorm => {
                let channels = input.dims[0];
                Layer::BatchNorm(BatchNorm::new(channels))
            }
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout { rate, mask: None }),
            LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(LeakyRelu { slope, input: None }),
            LayerSpec::Conv2d { kernel_h, kernel_w, out_channels } => Layer::Conv2d(Conv2d::new(
                [input.dims[0], input.dims[1], input.dims[2]],
                kernel_h,
                kernel_w,
                out_channels,
                rng,
            )),
            LayerSpec::MaxPool { kernel_h, kernel_w } => {
                Layer::MaxPool(MaxPool { kernel_h, kernel_w, argmax: Vec::new(), input_shape: Vec::new() })
            }
            LayerSpec::Flatten => Layer::Flatten(Flatten { input_shape: Vec::new() }),
        }
    }
}

/// A learnable buffer and its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl Param {
    fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.clear();
        self.grad.resize(self.value.len(), 0.0);
    }
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

fn expect_batch(t: &Tensor, name: &str, sample: &[usize]) -> Result<usize> {
    if t.shape().len() != sample.len() + 1 || &t.shape()[1..] != sample {
        return Err(shape_err(name, format!("expected [B, {sample:?}], got {:?}", t.shape())));
    }
    if t.batch() == 0 {
        return Err(shape_err(name, "empty batch"));
    }
    Ok(t.batch())
}

fn missing_cache(name: &str) -> NnError {
    NnError::InvalidArgument(format!("{name}: backward called without a preceding training forward"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs x outputs`, row-major.
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    input: Option<Tensor>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::new(xavier(rng, inputs, outputs, inputs * outputs)),
            bias: Param::new(vec![0.0; outputs]),
            input: None,
        }
    }

    fn forward(&mut self, x: Tensor) -> Result<Tensor> {
        let b = expect_batch(&x, "fully_connected", &[self.inputs])?;
        let mut out = Vec::with_capacity(b * self.outputs);
        for _ in 0..b {
            out.extend_from_slice(&self.bias.value);
        }
        gemm(false, false, b, self.outputs, self.inputs, 1.0, x.data(), &self.weight.value, 1.0, &mut out);
        self.input = Some(x);
        Tensor::new(vec![b, self.outputs], out)
    }

    fn backward(&mut self, g: Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("fully_connected"))?;
        let b = expect_batch(&g, "fully_connected", &[self.outputs])?;
        gemm(true, false, self.inputs, self.outputs, b, 1.0, x.data(), g.data(), 1.0, &mut self.weight.grad);
        for row in g.data().chunks(self.outputs) {
            for (acc, v) in self.bias.grad.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut dx = vec![0.0; b * self.inputs];
        gemm(false, true, b, self.inputs, self.outputs, 1.0, g.data(), &self.weight.value, 0.0, &mut dx);
        Tensor::new(vec![b, self.inputs], dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    #[serde(skip)]
    cache: Option<BnCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct BnCache {
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    spatial: usize,
}

impl BatchNorm {
    fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![1.0; channels]),
            beta: Param::new(vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: None,
        }
    }

    fn split(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = x.shape();
        if !(s.len() == 2 || s.len() == 4) || s[1] != self.channels || s[0] == 0 {
            return Err(shape_err("batch_norm", format!("expected [B, {}, ...], got {s:?}", self.channels)));
        }
        Ok((s[0], s[2..].iter().product()))
    }

    fn forward(&mut self, mut x: Tensor, mode: Mode) -> Result<Tensor> {
        let (b, spatial) = self.split(&x)?;
        let c = self.channels;
        let idx = |bi: usize, ci: usize, si: usize| (bi * c + ci) * spatial + si;
        if mode == Mode::Eval {
            let data = x.data_mut();
            for ci in 0..c {
                let inv = 1.0 / (self.running_var[ci] + BN_EPS).sqrt();
                for bi in 0..b {
                    for si in 0..spatial {
                        let v = &mut data[idx(bi, ci, si)];
                        *v = self.gamma.value[ci] * (*v - self.running_mean[ci]) * inv + self.beta.value[ci];
                    }
                }
            }
            return Ok(x);
        }
        let m = (b * spatial) as f64;
        let mut x_hat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; c];
        let data = x.data_mut();
        for ci in 0..c {
            let mut mean = 0.0;
            for bi in 0..b {
                for si in 0..spatial {
                    mean += data[idx(bi, ci, si)];
                }
            }
            mean /= m;
            let mut var = 0.0;
            for bi in 0..b {
                for si in 0..spatial {
                    var += (data[idx(bi, ci, si)] - mean).powi(2);
                }
            }
            var /= m;
            let inv = 1.0 / (var + BN_EPS).sqrt();
            inv_std[ci] = inv;
            for bi in 0..b {
                for si in 0..spatial {
                    let i = idx(bi, ci, si);
                    x_hat[i] = (data[i] - mean) * inv;
                    data[i] = self.gamma.value[ci] * x_hat[i] + self.beta.value[ci];
                }
            }
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            self.running_mean[ci] = (1.0 - BN_MOMENTUM) * self.running_mean[ci] + BN_MOMENTUM * mean;
            self.running_var[ci] = (1.0 - BN_MOMENTUM) * self.running_var[ci] + BN_MOMENTUM * unbiased;
        }
        self.cache = Some(BnCache { x_hat, inv_std, spatial });
        Ok(x)
    }

    fn backward(&mut self, mut g: Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batch_norm"))?;
        let (b, spatial) = self.split(&g)?;
        if spatial != cache.spatial || g.len() != cache.x_hat.len() {
            return Err(shape_err("batch_norm", "gradient shape differs from forward input"));
        }
        let c = self.channels;
        let m = (b * spatial) as f64;
        let idx = |bi: usize, ci: usize, si: usize| (bi * c + ci) * spatial + si;
        let data = g.data_mut();
        for ci in 0..c {
            let (mut sum_g, mut sum_gx) = (0.0, 0.0);
            for bi in 0..b {
                for si in 0..spatial {
                    let i = idx(bi, ci, si);
                    sum_g += data[i];
                    sum_gx += data[i] * cache.x_hat[i];
                }
            }
            self.beta.grad[ci] += sum_g;
            self.gamma.grad[ci] += sum_gx;
            let scale = self.gamma.value[ci] * cache.inv_std[ci] / m;
            for bi in 0..b {
                for si in 0..spatial {
                    let i = idx(bi, ci, si);
                    data[i] = scale * (m * data[i] - sum_g - cache.x_hat[i] * sum_gx);
                }
            }
        }
        Ok(g)
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub rate: f64,
    #[serde(skip)]
    mask: Option<Vec<f64>>,
}

impl Dropout {
    fn forward(&mut self, mut x: Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return x;
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep }).collect();
        for (v, m) in x.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        x
    }

    fn backward(&mut self, mut g: Tensor) -> Result<Tensor> {
        if let Some(mask) = &self.mask {
            if mask.len() != g.len() {
                return Err(shape_err("dropout", "gradient shape differs from forward input"));
            }
            for (v, m) in g.data_mut().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakyRelu {
    pub slope: f64,
    #[serde(skip)]
    input: Option<Vec<bool>>,
}

impl LeakyRelu {
    fn forward(&mut self, mut x: Tensor) -> Tensor {
        let positive: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
        for (v, &p) in x.data_mut().iter_mut().zip(&positive) {
            if !p {
                *v *= self.slope;
            }
        }
        self.input = Some(positive);
        x
    }

    fn backward(&mut self, mut g: Tensor) -> Result<Tensor> {
        let positive = self.input.as_ref().ok_or_else(|| missing_cache("leaky_relu"))?;
        if positive.len() != g.len() {
            return Err(shape_err("leaky_relu", "gradient shape differs from forward input"));
        }
        for (v, &p) in g.data_mut().iter_mut().zip(positive) {
            if !p {
                *v *= self.slope;
            }
        }
        Ok(g)
    }
}

/// Same-padded, stride-1 2-D convolution with full channel mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    /// `[C, H, W]` of one input sample.
    pub input_dims: [usize; 3],
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub out_channels: usize,
    /// `out_channels x (C * kh * kw)`, row-major.
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cols: Vec<f64>,
}

impl Conv2d {
    fn new(input_dims: [usize; 3], kernel_h: usize, kernel_w: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let patch = input_dims[0] * kernel_h * kernel_w;
        let fan_out = out_channels * kernel_h * kernel_w;
        Self {
            input_dims,
            kernel_h,
            kernel_w,
            out_channels,
            weight: Param::new(xavier(rng, patch, fan_out, out_channels * patch)),
            bias: Param::new(vec![0.0; out_channels]),
            cols: Vec::new(),
        }
    }

    fn patch(&self) -> usize {
        self.input_dims[0] * self.kernel_h * self.kernel_w
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let [c, h, w] = self.input_dims;
        let (pt, pl) = ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2);
        let hw = h * w;
        for ci in 0..c {
            for i in 0..self.kernel_h {
                for j in 0..self.kernel_w {
                    let row = (ci * self.kernel_h + i) * self.kernel_w + j;
                    for y in 0..h {
                        for xx in 0..w {
                            let (sy, sx) = ((y + i) as isize - pt as isize, (xx + j) as isize - pl as isize);
                            cols[row * hw + y * w + xx] = if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                x[ci * hw + sy as usize * w + sx as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let [c, h, w] = self.input_dims;
        let (pt, pl) = ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2);
        let hw = h * w;
        for ci in 0..c {
            for i in 0..self.kernel_h {
                for j in 0..self.kernel_w {
                    let row = (ci * self.kernel_h + i) * self.kernel_w + j;
                    for y in 0..h {
                        for xx in 0..w {
                            let (sy, sx) = ((y + i) as isize - pt as isize, (xx + j) as isize - pl as isize);
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                dx[ci * hw + sy as usize * w + sx as usize] += cols[row * hw + y * w + xx];
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&mut self, x: Tensor) -> Result<Tensor> {
        let b = expect_batch(&x, "conv2d", &self.input_dims)?;
        let [_, h, w] = self.input_dims;
        let (hw, patch, o) = (h * w, self.patch(), self.out_channels);
        let mut cols = vec![0.0; b * patch * hw];
        let mut out = vec![0.0; b * o * hw];
        let in_len = x.row_len();
        for bi in 0..b {
            let col = &mut cols[bi * patch * hw..(bi + 1) * patch * hw];
            self.im2col(&x.data()[bi * in_len..(bi + 1) * in_len], col);
            let dst = &mut out[bi * o * hw..(bi + 1) * o * hw];
            for (oc, chunk) in dst.chunks_mut(hw).enumerate() {
                chunk.fill(self.bias.value[oc]);
            }
            gemm(false, false, o, hw, patch, 1.0, &self.weight.value, col, 1.0, dst);
        }
        self.cols = cols;
        Tensor::new(vec![b, o, h, w], out)
    }

    fn backward(&mut self, g: Tensor) -> Result<Tensor> {
        let [c, h, w] = self.input_dims;
        let b = expect_batch(&g, "conv2d", &[self.out_channels, h, w])?;
        let (hw, patch, o) = (h * w, self.patch(), self.out_channels);
        if self.cols.len() != b * patch * hw {
            return Err(missing_cache("conv2d"));
        }
        let mut dx = vec![0.0; b * c * hw];
        let mut dcols = vec![0.0; patch * hw];
        for bi in 0..b {
            let gs = &g.data()[bi * o * hw..(bi + 1) * o * hw];
            let col = &self.cols[bi * patch * hw..(bi + 1) * patch * hw];
            gemm(false, true, o, patch, hw, 1.0, gs, col, 1.0, &mut self.weight.grad);
            for (oc, chunk) in gs.chunks(hw).enumerate() {
                self.bias.grad[oc] += chunk.iter().sum::<f64>();
            }
            gemm(true, false, patch, hw, o, 1.0, &self.weight.value, gs, 0.0, &mut dcols);
            self.col2im(&dcols, &mut dx[bi * c * hw..(bi + 1) * c * hw]);
        }
        Tensor::new(vec![b, c, h, w], dx)
    }
}

/// Stride-1 max pooling with same padding (padding never wins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPool {
    pub kernel_h: usize,
    pub kernel_w: usize,
    #[serde(skip)]
    argmax: Vec<usize>,
    #[serde(skip)]
    input_shape: Vec<usize>,
}

impl MaxPool {
    fn forward(&mut self, x: Tensor) -> Result<Tensor> {
        let s = x.shape().to_vec();
        if s.len() != 4 || s[0] == 0 {
            return Err(shape_err("max_pool", format!("expected [B, C, H, W], got {s:?}")));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let (pt, pl) = ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2);
        let mut out = vec![0.0; x.len()];
        let mut argmax = vec![0; x.len()];
        let data = x.data();
        for p in 0..planes {
            let base = p * h * w;
            for y in 0..h {
                for xx in 0..w {
                    let mut best = (usize::MAX, f64::NEG_INFINITY);
                    for i in 0..self.kernel_h {
                        for j in 0..self.kernel_w {
                            let (sy, sx) = ((y + i) as isize - pt as isize, (xx + j) as isize - pl as isize);
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                let k = base + sy as usize * w + sx as usize;
                                if data[k] > best.1 || best.0 == usize::MAX {
                                    best = (k, data[k]);
                                }
                            }
                        }
                    }
                    out[base + y * w + xx] = best.1;
                    argmax[base + y * w + xx] = best.0;
                }
            }
        }
        self.argmax = argmax;
        self.input_shape = s.clone();
        Tensor::new(s, out)
    }

    fn backward(&mut self, g: Tensor) -> Result<Tensor> {
        if g.shape() != self.input_shape.as_slice() {
            return Err(missing_cache("max_pool"));
        }
        let mut dx = vec![0.0; g.len()];
        for (v, &k) in g.data().iter().zip(&self.argmax) {
            dx[k] += v;
        }
        Tensor::new(self.input_shape.clone(), dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flatten {
    #[serde(skip)]
    input_shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Dropout(Dropout),
    LeakyRelu(LeakyRelu),
    Conv2d(Conv2d),
    MaxPool(MaxPool),
    Flatten(Flatten),
}

impl Layer {
    pub(crate) fn forward(&mut self, x: Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Dropout(l) => Ok(l.forward(x, mode, rng)),
            Layer::LeakyRelu(l) => Ok(l.forward(x)),
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Flatten(l) => {
                l.input_shape = x.shape().to_vec();
                let (b, row) = (x.batch(), x.row_len());
                x.reshape(vec![b, row])
            }
        }
    }

    pub(crate) fn backward(&mut self, g: Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.backward(g),
            Layer::BatchNorm(l) => l.backward(g),
            Layer::Dropout(l) => l.backward(g),
            Layer::LeakyRelu(l) => l.backward(g),
            Layer::Conv2d(l) => l.backward(g),
            Layer::MaxPool(l) => l.backward(g),
            Layer::Flatten(l) => g.reshape(l.input_shape.clone()),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn set_dropout(&mut self, rate: f64) {
        if let Layer::Dropout(l) = self {
            l.rate = rate;
        }
    }
}
