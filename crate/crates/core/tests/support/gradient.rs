//! Independent forward pass and central-difference gradient oracle.
#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use fa_core::analytics::mlp::MlpModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Straight-line reference: y = W2 · relu(W1 x + b1) + b2.
pub fn reference_logits(m: &MlpModel, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = vec![0.0; m.hidden];
    for j in 0..m.hidden {
        let mut acc = m.b1[j];
        for i in 0..m.input_dim {
            acc += m.w1[j * m.input_dim + i] * x[i];
        }
        z[j] = acc;
    }
    let mut y = vec![0.0; m.outputs];
    for k in 0..m.outputs {
        let mut acc = m.b2[k];
        for j in 0..m.hidden {
            acc += m.w2[k * m.hidden + j] * z[j].max(0.0);
        }
        y[k] = acc;
    }
    (z, y)
}

pub fn reference_loss(m: &MlpModel, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (x, &l) in xs.iter().zip(labels) {
        let (_, y) = reference_logits(m, x);
        let sum: f64 = y.iter().map(|v| v.exp()).sum();
        total += sum.ln() - y[l];
    }
    total / xs.len() as f64
}

pub fn signs(m: &MlpModel, xs: &[Vec<f64>]) -> Vec<bool> {
    xs.iter()
        .flat_map(|x| reference_logits(m, x).0)
        .map(|z| z > 0.0)
        .collect()
}

pub fn param_mut(m: &mut MlpModel, mut i: usize) -> &mut f64 {
    for v in [&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2] {
        if i < v.len() {
            return &mut v[i];
        }
        i -= v.len();
    }
    unreachable!()
}

/// Central differences against the reference loss, skipping parameters whose
/// perturbation crosses a ReLU kink.
pub fn finite_difference_error(m: &MlpModel, xs: &[Vec<f64>], labels: &[usize], h: f64) -> f64 {
    let analytic = m.gradient(xs, labels);
    let base = signs(m, xs);
    let mut probe = m.clone();
    let mut worst: f64 = 0.0;
    for (i, g) in analytic.iter().enumerate() {
        let w = *param_mut(&mut probe, i);
        *param_mut(&mut probe, i) = w + h;
        let plus = reference_loss(&probe, xs, labels);
        let kink_plus = signs(&probe, xs) != base;
        *param_mut(&mut probe, i) = w - h;
        let minus = reference_loss(&probe, xs, labels);
        let kink_minus = signs(&probe, xs) != base;
        *param_mut(&mut probe, i) = w;
        if kink_plus || kink_minus {
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / (g.abs() + numeric.abs()).max(1e-6));
    }
    worst
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let xs = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let ys = (0..n).map(|_| rng.random_range(0..classes)).collect();
    (xs, ys)
}
