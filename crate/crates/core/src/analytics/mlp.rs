//! Two-layer perceptron head: `W2 · ReLU(Dropout(W1 · x + b1)) + b2`.
#![allow(clippy::needless_range_loop)]

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 6] = b"FAMLP\0";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {0} has no training samples")]
    EmptyClass(String),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("features and labels differ in length")]
    LengthMismatch,
    #[error("model file: {0}")]
    Format(String),
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 32,
            hidden: 256,
            dropout: 0.3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// `hidden × input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `outputs × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub dropout: f64,
    pub class_names: Vec<String>,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
}

/// Activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Pre-activation after dropout scaling.
    pub pre: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/(1-p); all 1 in eval mode).
    pub mask: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub class_index: usize,
    pub confidence: f64,
    pub distribution: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean cross-entropy on the full training set after each epoch, in eval mode.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
}

struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Grads {
    fn zeros(m: &MlpModel) -> Self {
        Grads {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

impl MlpModel {
    /// PyTorch-style init: every parameter uniform in ±1/sqrt(fan_in).
    pub fn init(input_dim: usize, hidden: usize, class_names: Vec<String>, dropout: f64, seed: u64) -> Self {
        let outputs = class_names.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w1 = draw(hidden * input_dim, input_dim);
        let b1 = draw(hidden, input_dim);
        let w2 = draw(outputs * hidden, hidden);
        let b2 = draw(outputs, hidden);
        MlpModel {
            input_dim,
            hidden,
            outputs,
            w1,
            b1,
            w2,
            b2,
            dropout,
            class_names,
            norm_mean: vec![0.0; input_dim],
            norm_std: vec![1.0; input_dim],
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, class_names: Vec<String>) -> Self {
        let mut m = Self::init(input_dim, hidden, class_names, 0.0, 0);
        for v in m.w1.iter_mut().chain(&mut m.b1).chain(&mut m.w2).chain(&mut m.b2) {
            *v = 0.0;
        }
        m
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn normalize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.norm_mean.iter().zip(&self.norm_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Forward pass on already-normalized input. Dropout applies only in
    /// `train_mode`, with inverted scaling.
    pub fn forward(&self, x: &[f64], train_mode: bool, dropout_seed: u64) -> Result<Forward, MlpError> {
        if x.len() != self.input_dim {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mask: Vec<f64> = if train_mode && self.dropout > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let keep = 1.0 / (1.0 - self.dropout);
            (0..self.hidden)
                .map(|_| if rng.random::<f64>() < self.dropout { 0.0 } else { keep })
                .collect()
        } else {
            vec![1.0; self.hidden]
        };
        Ok(self.forward_with_mask(x, mask))
    }

    fn forward_with_mask(&self, x: &[f64], mask: Vec<f64>) -> Forward {
        let mut pre = vec![0.0; self.hidden];
        for (j, p) in pre.iter_mut().enumerate() {
            let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            *p = z * mask[j];
        }
        let hidden: Vec<f64> = pre.iter().map(|p| p.max(0.0)).collect();
        let logits = (0..self.outputs)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[k]
            })
            .collect();
        Forward {
            pre,
            mask,
            hidden,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        Ok(self.forward(x, false, 0)?.logits)
    }

    /// Normalize raw features and classify.
    pub fn predict(&self, features: &[f64]) -> Result<Prediction, MlpError> {
        if features.len() != self.input_dim {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        let logits = self.logits(&self.normalize(features))?;
        let distribution = softmax(&logits);
        let class_index = argmax(&logits);
        Ok(Prediction {
            class_index,
            confidence: distribution[class_index],
            distribution,
        })
    }

    /// Mean cross-entropy over normalized inputs in eval mode.
    pub fn loss(&self, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(labels)
            .map(|(x, &y)| cross_entropy(&self.forward_with_mask(x, vec![1.0; self.hidden]).logits, y))
            .sum();
        total / xs.len().max(1) as f64
    }

    fn accumulate(&self, x: &[f64], label: usize, fwd: &Forward, scale: f64, g: &mut Grads) {
        let probs = softmax(&fwd.logits);
        let mut dhidden = vec![0.0; self.hidden];
        for k in 0..self.outputs {
            let d = (probs[k] - if k == label { 1.0 } else { 0.0 }) * scale;
            g.b2[k] += d;
            let row = k * self.hidden;
            for j in 0..self.hidden {
                g.w2[row + j] += d * fwd.hidden[j];
                dhidden[j] += d * self.w2[row + j];
            }
        }
        for j in 0..self.hidden {
            if fwd.pre[j] <= 0.0 {
                continue;
            }
            let dz = dhidden[j] * fwd.mask[j];
            if dz == 0.0 {
                continue;
            }
            g.b1[j] += dz;
            let row = j * self.input_dim;
            for (i, xi) in x.iter().enumerate() {
                g.w1[row + i] += dz * xi;
            }
        }
    }

    fn parameters_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Analytic gradient of the mean eval-mode loss, flattened in
    /// `w1, b1, w2, b2` order.
    pub fn gradient(&self, xs: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
        let mut g = Grads::zeros(self);
        let scale = 1.0 / xs.len().max(1) as f64;
        for (x, &y) in xs.iter().zip(labels) {
            let fwd = self.forward_with_mask(x, vec![1.0; self.hidden]);
            self.accumulate(x, y, &fwd, scale, &mut g);
        }
        [g.w1, g.b1, g.w2, g.b2].concat()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    fn set_flat(&mut self, index: usize, value: f64) {
        let mut i = index;
        for p in self.parameters_mut() {
            if i < p.len() {
                p[i] = value;
                return;
            }
            i -= p.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn activation_pattern(&self, xs: &[Vec<f64>]) -> Vec<bool> {
        xs.iter()
            .flat_map(|x| self.forward_with_mask(x, vec![1.0; self.hidden]).pre)
            .map(|p| p > 0.0)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), MlpError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MlpError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for d in [self.input_dim, self.hidden, self.outputs] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.dropout.to_le_bytes());
        for name in &self.class_names {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for block in [&self.norm_mean, &self.norm_std, &self.w1, &self.b1, &self.w2, &self.b2] {
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, MlpError> {
        let bad = |m: &str| MlpError::Format(m.to_string());
        if buf.len() < MAGIC.len() + 2 + 12 + 8 + 4 || &buf[..MAGIC.len()] != MAGIC {
            return Err(bad("not a model file"));
        }
        let (body, tail) = buf.split_at(buf.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(MlpError::Format(format!("unsupported version {version}")));
        }
        let input_dim = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let dropout = r.f64()?;
        let mut class_names = Vec::with_capacity(outputs);
        for _ in 0..outputs {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("class name is not utf-8"))?;
            class_names.push(name.to_string());
        }
        let norm_mean = r.f64s(input_dim)?;
        let norm_std = r.f64s(input_dim)?;
        let w1 = r.f64s(hidden * input_dim)?;
        let b1 = r.f64s(hidden)?;
        let w2 = r.f64s(outputs * hidden)?;
        let b2 = r.f64s(outputs)?;
        if r.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(MlpModel {
            input_dim,
            hidden,
            outputs,
            w1,
            b1,
            w2,
            b2,
            dropout,
            class_names,
            norm_mean,
            norm_std,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], MlpError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| MlpError::Format("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MlpError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, MlpError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, MlpError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Per-feature mean and standard deviation; constant features get std 1.
pub fn normalization_stats(features: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = features.first().map_or(0, Vec::len);
    let n = features.len().max(1) as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|i| features.iter().map(|f| f[i]).sum::<f64>() / n)
        .collect();
    let std = (0..dim)
        .map(|i| {
            let var = features.iter().map(|f| (f[i] - mean[i]).powi(2)).sum::<f64>() / n;
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// Train with Adam on mini-batches; batch order and dropout masks derive from
/// `config.seed`.
pub fn train(
    features: &[Vec<f64>],
    labels: &[usize],
    class_names: &[String],
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport), MlpError> {
    if features.len() != labels.len() {
        return Err(MlpError::LengthMismatch);
    }
    let classes = class_names.len();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(MlpError::BadLabel { label, classes });
    }
    for (k, name) in class_names.iter().enumerate() {
        if !labels.contains(&k) {
            return Err(MlpError::EmptyClass(name.clone()));
        }
    }
    let input_dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != input_dim) {
        return Err(MlpError::DimensionMismatch {
            expected: input_dim,
            got: bad.len(),
        });
    }

    let mut model = MlpModel::init(
        input_dim,
        config.hidden,
        class_names.to_vec(),
        config.dropout,
        config.seed,
    );
    let (mean, std) = normalization_stats(features);
    model.norm_mean = mean;
    model.norm_std = std;
    let xs: Vec<Vec<f64>> = features.iter().map(|f| model.normalize(f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed0fba7c);
    let mut m = Grads::zeros(&model);
    let mut v = Grads::zeros(&model);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut g = Grads::zeros(&model);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let fwd = model.forward(&xs[i], true, rng.random())?;
                model.accumulate(&xs[i], labels[i], &fwd, scale, &mut g);
            }
            step += 1;
            let c1 = 1.0 - config.beta1.powi(step);
            let c2 = 1.0 - config.beta2.powi(step);
            let grads = [&g.w1, &g.b1, &g.w2, &g.b2];
            let firsts = [&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2];
            let seconds = [&mut v.w1, &mut v.b1, &mut v.w2, &mut v.b2];
            for (((p, gr), mm), vv) in model.parameters_mut().into_iter().zip(grads).zip(firsts).zip(seconds) {
                for i in 0..p.len() {
                    mm[i] = config.beta1 * mm[i] + (1.0 - config.beta1) * gr[i];
                    vv[i] = config.beta2 * vv[i] + (1.0 - config.beta2) * gr[i] * gr[i];
                    let mhat = mm[i] / c1;
                    let vhat = vv[i] / c2;
                    p[i] -= config.learning_rate * mhat / (vhat.sqrt() + config.epsilon);
                }
            }
        }
        epoch_losses.push(model.loss(&xs, labels));
    }

    let correct = xs
        .iter()
        .zip(labels)
        .filter(|(x, &y)| argmax(&model.forward_with_mask(x, vec![1.0; model.hidden]).logits) == y)
        .count();
    let report = TrainReport {
        epoch_losses,
        train_accuracy: correct as f64 / xs.len() as f64,
    };
    Ok((model, report))
}

/// Largest relative error between the analytic gradient and central
/// differences with step `rel_step · max(|w|, 1)`. Parameters whose
/// perturbation flips any ReLU are skipped since the loss is not smooth there.
pub fn gradient_check_with_step(model: &MlpModel, xs: &[Vec<f64>], labels: &[usize], rel_step: f64) -> f64 {
    let analytic = model.gradient(xs, labels);
    let base = model.flat_parameters();
    let pattern = model.activation_pattern(xs);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &w) in base.iter().enumerate() {
        let h = rel_step * w.abs().max(1.0);
        probe.set_flat(i, w + h);
        let plus = probe.loss(xs, labels);
        let kink = probe.activation_pattern(xs) != pattern;
        probe.set_flat(i, w - h);
        let minus = probe.loss(xs, labels);
        let kink = kink || probe.activation_pattern(xs) != pattern;
        probe.set_flat(i, w);
        if kink {
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

pub fn gradient_check(model: &MlpModel, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
    gradient_check_with_step(model, xs, labels, 1e-4)
}
