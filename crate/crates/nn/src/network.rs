//! Network specifications, the two reference topologies and a sequential
//! container with reverse-mode differentiation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{Layer, LayerSpec, Mode, Param, SampleShape};
use crate::{shape_err, NnError, Result, Tensor};

pub const MLP_WIDTHS: [usize; 19] = [1024, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 1024, 1024];
/// Rear dense widths of the CNN; with per-plane accounting they give
/// `1024*256 + 256*38 + 38*136 + 136*1024 = 416304` interior weights.
pub const CNN_REAR_WIDTHS: [usize; 5] = [1024, 256, 38, 136, 1024];
pub const CNN_CHANNELS: usize = 64;
pub const CNN_UNITS: usize = 4;
pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample input shape (no batch axis).
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub output_dim: usize,
}

impl NetworkSpec {
    /// Propagates shapes through every layer; the last entry is the output.
    pub fn shapes(&self) -> Result<Vec<SampleShape>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(shape_err("input", format!("invalid input shape {:?}", self.input_shape)));
        }
        let mut shapes = vec![SampleShape::input(&self.input_shape)];
        for (i, l) in self.layers.iter().enumerate() {
            let next = l.output_shape(shapes.last().unwrap()).map_err(|e| rename(e, i, l))?;
            shapes.push(next);
        }
        let out = shapes.last().unwrap();
        if out.dims.len() != 1 || out.dims[0] != self.output_dim {
            return Err(shape_err("output", format!("network ends in {:?}, declared output_dim {}", out.dims, self.output_dim)));
        }
        Ok(shapes)
    }

    /// Weight count under per-plane accounting (see [`LayerSpec::counted_weights`]).
    pub fn param_count(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        Ok(self.layers.iter().zip(&shapes).map(|(l, s)| l.counted_weights(s)).sum())
    }
}

fn rename(e: NnError, index: usize, spec: &LayerSpec) -> NnError {
    match e {
        NnError::Shape { detail, .. } => NnError::Shape { layer: format!("layer {index} ({})", spec.name()), detail },
        other => other,
    }
}

fn unit(layers: &mut Vec<LayerSpec>, width: usize) {
    layers.push(LayerSpec::FullyConnected { out_dim: width, planes: 1 });
    layers.push(LayerSpec::BatchNorm);
    layers.push(LayerSpec::Dropout { rate: DEFAULT_DROPOUT });
}

fn check_even(input_dim: usize) -> Result<()> {
    if input_dim == 0 || input_dim % 2 != 0 {
        return Err(NnError::InvalidArgument(format!("input_dim {input_dim} must be a positive even count (re/im planes)")));
    }
    Ok(())
}

/// Fully connected regression net for a `[2, input_dim / 2]` input: twenty
/// FC/BN/dropout units without activations, then an output layer of
/// `input_dim`.
pub fn build_mlp(input_dim: usize) -> Result<NetworkSpec> {
    build_mlp_scaled(input_dim, 1)
}

/// [`build_mlp`] with every hidden width divided by `divisor`.
pub fn build_mlp_scaled(input_dim: usize, divisor: usize) -> Result<NetworkSpec> {
    check_even(input_dim)?;
    let divisor = divisor.max(1);
    let mut layers = vec![LayerSpec::Flatten];
    for w in MLP_WIDTHS {
        unit(&mut layers, (w / divisor).max(1));
    }
    layers.push(LayerSpec::FullyConnected { out_dim: input_dim, planes: 2 });
    Ok(NetworkSpec { input_shape: vec![2, input_dim / 2], layers, output_dim: input_dim })
}

/// Convolutional regression net for a `[2, q, l]` image of path gains.
pub fn build_cnn(q: usize, l: usize) -> Result<NetworkSpec> {
    build_cnn_scaled(q, l, 1)
}

/// [`build_cnn`] with channels and rear widths divided by `divisor`; rear
/// widths never drop below the `2 q l` output size.
pub fn build_cnn_scaled(q: usize, l: usize, divisor: usize) -> Result<NetworkSpec> {
    if q == 0 || l == 0 {
        return Err(NnError::InvalidArgument(format!("Q = {q}, L = {l} must both be at least 1")));
    }
    let divisor = divisor.max(1);
    let out = 2 * q * l;
    let channels = (CNN_CHANNELS / divisor).max(1);
    let mut layers = Vec::new();
    for _ in 0..CNN_UNITS {
        layers.push(LayerSpec::Conv2d { kernel_h: 5, kernel_w: 5, out_channels: channels });
        layers.push(LayerSpec::BatchNorm);
        layers.push(LayerSpec::LeakyRelu { slope: LEAKY_SLOPE });
        layers.push(LayerSpec::MaxPool { kernel_h: 3, kernel_w: 3 });
    }
    layers.push(LayerSpec::Flatten);
    for w in CNN_REAR_WIDTHS {
        let w = if divisor == 1 { w } else { (w / divisor).max(out) };
        unit(&mut layers, w);
    }
    layers.push(LayerSpec::FullyConnected { out_dim: out, planes: 2 });
    Ok(NetworkSpec { input_shape: vec![2, q, l], layers, output_dim: out })
}

fn fresh_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// A sequential network with parameters and per-layer caches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    #[serde(skip, default = "fresh_rng")]
    rng: ChaCha8Rng,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

impl Network {
    /// Allocates and initialises parameters deterministically from `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec.layers.iter().zip(&shapes).map(|(l, s)| l.instantiate(s, &mut rng)).collect();
        Ok(Self { spec, layers, rng })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Counted weights, see [`NetworkSpec::param_count`].
    pub fn param_count(&self) -> usize {
        self.spec.param_count().expect("validated at construction")
    }

    /// Every learnable scalar, including biases and batch-norm affines.
    pub fn trainable_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|p| p.value.len()).sum()
    }

    /// Resets the dropout stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn set_dropout(&mut self, rate: f64) {
        for (l, s) in self.layers.iter_mut().zip(self.spec.layers.iter_mut()) {
            if let LayerSpec::Dropout { rate: r } = s {
                *r = rate;
                l.set_dropout(rate);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// `x` has shape `[B, *input_shape]`; returns `[B, output_dim]`.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.shape().len() != self.spec.input_shape.len() + 1 || x.shape()[1..] != self.spec.input_shape[..] {
            return Err(shape_err("input", format!("expected [B, {:?}], got {:?}", self.spec.input_shape, x.shape())));
        }
        let mut h = x.clone();
        for (i, (layer, spec)) in self.layers.iter_mut().zip(&self.spec.layers).enumerate() {
            h = layer.forward(h, mode, &mut self.rng).map_err(|e| rename(e, i, spec))?;
        }
        Ok(h)
    }

    /// Back-propagates `grad` (shaped like the last output), accumulating
    /// parameter gradients.
    pub fn backward(&mut self, grad: Tensor) -> Result<Tensor> {
        let mut g = grad;
        for (i, (layer, spec)) in self.layers.iter_mut().zip(&self.spec.layers).enumerate().rev() {
            g = layer.backward(g).map_err(|e| rename(e, i, spec))?;
        }
        Ok(g)
    }

    /// Mean squared error of `forward(x)` against `target`.
    pub fn loss(&mut self, x: &Tensor, target: &Tensor, mode: Mode) -> Result<f64> {
        let y = self.forward(x, mode)?;
        Ok(mse(&y, target)?.0)
    }

    /// Training-mode forward and backward pass; gradients accumulate.
    pub fn loss_and_grad(&mut self, x: &Tensor, target: &Tensor) -> Result<f64> {
        let y = self.forward(x, Mode::Train)?;
        let (loss, grad) = mse(&y, target)?;
        self.backward(grad)?;
        Ok(loss)
    }
}

/// MSE and its gradient with respect to the prediction.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(shape_err("loss", format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = Tensor::new(pred.shape().to_vec(), diff.into_iter().map(|d| 2.0 * d / n).collect())?;
    Ok((loss, grad))
}
