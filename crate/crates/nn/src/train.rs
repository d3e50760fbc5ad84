//! Mini-batch Adam training, feature standardisation and model files.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::Mode;
use crate::network::Network;
use crate::{shape_err, NnError, Result, Tensor};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Applied to every dropout layer of the network.
    pub dropout_rate: f64,
    pub seed: u64,
    /// Share of training rows held back for the validation curve.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            dropout_rate: 0.1,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction {} outside [0, 0.5]", self.validation_fraction));
        }
        Ok(())
    }
}

/// Paired inputs `[N, ...]` and targets `[N, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl Dataset {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.batch() == 0 || inputs.batch() != targets.batch() {
            return Err(shape_err("dataset", format!("{} inputs vs {} targets", inputs.batch(), targets.batch())));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(features: usize) -> Self {
        Self { mean: vec![0.0; features], std: vec![1.0; features] }
    }

    /// Statistics over the leading axis; constant features keep unit scale.
    pub fn fit(t: &Tensor) -> Self {
        let (n, f) = (t.batch(), t.row_len());
        let mut mean = vec![0.0; f];
        for row in t.data().chunks(f) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; f];
        for row in t.data().chunks(f) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 * m.abs().max(1e-300) && sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn check(&self, t: &Tensor) -> Result<()> {
        if t.row_len() != self.mean.len() {
            return Err(shape_err("standardizer", format!("{} features, fitted on {}", t.row_len(), self.mean.len())));
        }
        Ok(())
    }

    pub fn apply(&self, t: &Tensor) -> Result<Tensor> {
        self.check(t)?;
        let mut out = t.clone();
        let f = self.mean.len();
        for row in out.data_mut().chunks_mut(f) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, t: &Tensor) -> Result<Tensor> {
        self.check(t)?;
        let mut out = t.clone();
        let f = self.mean.len();
        for row in out.data_mut().chunks_mut(f) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }
}

/// Trained network plus the frozen normalisation of inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format_version: u32,
    pub network: Network,
    pub input_norm: Standardizer,
    pub target_norm: Standardizer,
    pub config: TrainConfig,
}

impl Model {
    /// Eval-mode prediction in the original target units.
    pub fn predict(&mut self, x: &Tensor) -> Result<Tensor> {
        let xs = self.input_norm.apply(x)?;
        let y = self.network.forward(&xs, Mode::Eval)?;
        self.target_norm.invert(&y)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self).map_err(|e| NnError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        let mut model: Model =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| NnError::Format(format!("{}: {e}", path.display())))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported model version {}", model.format_version)));
        }
        model.network.spec().shapes()?;
        model.network.zero_grad();
        Ok(model)
    }
}

pub fn predict(model: &mut Model, x: &Tensor) -> Result<Tensor> {
    model.predict(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean training-mode batch loss, standardised units.
    pub train: f64,
    /// Eval-mode loss on the held-back rows, standardised units.
    pub validation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochLoss>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(net: &mut Network) -> Self {
        let sizes: Vec<usize> = net.params_mut().iter().map(|p| p.value.len()).collect();
        Self { m: sizes.iter().map(|&n| vec![0.0; n]).collect(), v: sizes.iter().map(|&n| vec![0.0; n]).collect(), t: 0 }
    }

    fn step(&mut self, net: &mut Network, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for ((p, m), v) in net.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p.value[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Splits `order` into batches, folding a trailing singleton into the
/// previous batch so batch norm never sees a single sample.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out.last().map(|b| b.len()) == Some(1) {
        let n = out.len();
        let start = (n - 2) * size;
        out.truncate(n - 2);
        out.push(&order[start..]);
    }
    out
}

/// Trains `net` on `data`; deterministic given `cfg.seed`.
pub fn train(mut net: Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.len();
    if data.targets.row_len() != net.spec().output_dim {
        return Err(shape_err("targets", format!("{} target features for output_dim {}", data.targets.row_len(), net.spec().output_dim)));
    }
    net.set_dropout(cfg.dropout_rate);
    net.reseed(cfg.seed.wrapping_add(1));
    net.zero_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64) * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(2));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let train_in = data.inputs.gather_rows(&train_idx)?;
    let train_out = data.targets.gather_rows(&train_idx)?;
    let input_norm = Standardizer::fit(&train_in);
    let target_norm = Standardizer::fit(&train_out);
    let xs = input_norm.apply(&data.inputs)?;
    let ys = target_norm.apply(&data.targets)?;
    let val = if val_idx.is_empty() { None } else { Some((xs.gather_rows(val_idx)?, ys.gather_rows(val_idx)?)) };

    let mut adam = Adam::new(&mut net);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in batches(&train_idx, cfg.batch_size) {
            let x = xs.gather_rows(batch)?;
            let y = ys.gather_rows(batch)?;
            net.zero_grad();
            let loss = net.loss_and_grad(&x, &y)?;
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch, learning_rate: cfg.learning_rate, loss });
            }
            adam.step(&mut net, cfg);
            total += loss * batch.len() as f64;
        }
        let validation = match &val {
            Some((vx, vy)) => Some(net.loss(vx, vy, Mode::Eval)?),
            None => None,
        };
        let train_loss = total / train_idx.len() as f64;
        log::debug!("epoch {epoch}: train {train_loss:.4e} validation {validation:?}");
        history.push(EpochLoss { epoch, train: train_loss, validation });
    }
    net.zero_grad();
    let model = Model { format_version: MODEL_FORMAT_VERSION, network: net, input_norm, target_norm, config: cfg.clone() };
    Ok(TrainOutcome { model, history })
}
