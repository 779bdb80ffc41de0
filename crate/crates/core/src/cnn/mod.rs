//! Convolutional mortality classifier.
//!
//! One convolution layer with full-height filters (each filter spans `k`
//! time steps and every feature), ReLU, global max-pooling over time, a dense
//! layer to two logits and a softmax. Gradients are derived by hand.

mod features;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, Matrix};
use crate::{seed, Error, Result};

pub use features::{build_features, FeatureMatrix, FeatureMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub filters: usize,
    pub width: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight each example by the inverse prevalence of its class.
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            filters: 32,
            width: 3,
            batch_size: 32,
            learning_rate: 0.01,
            epochs: 30,
            class_weighting: true,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.width == 0 || self.batch_size == 0 {
            return Err(Error::Config("cnn filters, width and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("cnn learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub width: usize,
    pub n_features: usize,
    /// `n_f × (width · F)`; row `f` is filter `f` flattened time-major.
    pub filters: Matrix,
    pub conv_bias: Vec<f64>,
    /// `n_f × 2`
    pub dense: Matrix,
    pub dense_bias: [f64; 2],
}

pub type CnnGrad = CnnParams;

impl CnnParams {
    pub fn zeros(n_filters: usize, width: usize, n_features: usize) -> Self {
        CnnParams {
            width,
            n_features,
            filters: Matrix::zeros(n_filters, width * n_features),
            conv_bias: vec![0.0; n_filters],
            dense: Matrix::zeros(n_filters, 2),
            dense_bias: [0.0; 2],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: rand::Rng>(n_filters: usize, width: usize, n_features: usize, rng: &mut R) -> Self {
        let fan = (width * n_features + n_filters) as f64;
        let filters = Matrix::uniform(n_filters, width * n_features, (6.0 / fan).sqrt(), rng);
        let dense = Matrix::uniform(n_filters, 2, (6.0 / (n_filters + 2) as f64).sqrt(), rng);
        CnnParams {
            width,
            n_features,
            filters,
            conv_bias: vec![0.0; n_filters],
            dense,
            dense_bias: [0.0; 2],
        }
    }

    pub fn n_filters(&self) -> usize {
        self.conv_bias.len()
    }

    /// Mutable views of every parameter block, in checkpoint order.
    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.filters.data,
            &mut self.conv_bias,
            &mut self.dense.data,
            &mut self.dense_bias,
        ]
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.filters.data, &self.conv_bias, &self.dense.data, &self.dense_bias]
    }

    fn axpy(&mut self, a: f64, other: &CnnParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            axpy(a, src, dst);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

struct Forward {
    conv_at_argmax: Vec<f64>,
    argmax: Vec<usize>,
    pooled: Vec<f64>,
    probs: [f64; 2],
}

fn check_shape(params: &CnnParams, x: &FeatureMatrix) -> Result<()> {
    if x.n_features != params.n_features {
        return Err(Error::Dimension {
            expected: params.n_features,
            actual: x.n_features,
        });
    }
    if x.time_steps < params.width {
        return Err(Error::TooShort {
            time_steps: x.time_steps,
            width: params.width,
        });
    }
    Ok(())
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

fn forward_cached(params: &CnnParams, x: &FeatureMatrix) -> Result<Forward> {
    check_shape(params, x)?;
    let span = params.width * params.n_features;
    let positions = x.time_steps - params.width + 1;
    let n_f = params.n_filters();
    let mut conv_at_argmax = vec![0.0; n_f];
    let mut argmax = vec![0; n_f];
    let mut pooled = vec![0.0; n_f];
    for f in 0..n_f {
        let w = params.filters.row(f);
        let mut best = f64::NEG_INFINITY;
        for t in 0..positions {
            let window = &x.values[t * params.n_features..t * params.n_features + span];
            let z = params.conv_bias[f] + dot(w, window);
            let a = z.max(0.0);
            // strict comparison keeps the earliest position on ties
            if a > best {
                best = a;
                argmax[f] = t;
                conv_at_argmax[f] = z;
            }
        }
        pooled[f] = best;
    }
    let mut logits = params.dense_bias;
    for (f, &p) in pooled.iter().enumerate() {
        logits[0] += p * params.dense.get(f, 0);
        logits[1] += p * params.dense.get(f, 1);
    }
    Ok(Forward {
        conv_at_argmax,
        argmax,
        pooled,
        probs: softmax2(logits),
    })
}

/// Class probabilities `[survived, died]`.
pub fn forward(params: &CnnParams, x: &FeatureMatrix) -> Result<[f64; 2]> {
    Ok(forward_cached(params, x)?.probs)
}

/// `−ln p[label]`, with the probability clamped at 1e-12.
pub fn ce_loss(probs: [f64; 2], label: bool) -> f64 {
    -probs[usize::from(label)].max(1e-12).ln()
}

/// Gradient of `weight · ce_loss(forward(x), label)`.
pub fn backward(params: &CnnParams, x: &FeatureMatrix, label: bool, weight: f64) -> Result<CnnGrad> {
    let fwd = forward_cached(params, x)?;
    let mut grad = CnnParams::zeros(params.n_filters(), params.width, params.n_features);
    accumulate(params, x, label, weight, &fwd, &mut grad);
    Ok(grad)
}

fn accumulate(params: &CnnParams, x: &FeatureMatrix, label: bool, weight: f64, fwd: &Forward, grad: &mut CnnGrad) {
    let y = usize::from(label);
    let mut dlogits = fwd.probs;
    dlogits[y] -= 1.0;
    dlogits[0] *= weight;
    dlogits[1] *= weight;
    grad.dense_bias[0] += dlogits[0];
    grad.dense_bias[1] += dlogits[1];
    let span = params.width * params.n_features;
    for f in 0..params.n_filters() {
        *grad.dense.get_mut(f, 0) += fwd.pooled[f] * dlogits[0];
        *grad.dense.get_mut(f, 1) += fwd.pooled[f] * dlogits[1];
        if fwd.conv_at_argmax[f] <= 0.0 {
            continue;
        }
        let dz = params.dense.get(f, 0) * dlogits[0] + params.dense.get(f, 1) * dlogits[1];
        let t = fwd.argmax[f];
        let window = &x.values[t * params.n_features..t * params.n_features + span];
        axpy(dz, window, grad.filters.row_mut(f));
        grad.conv_bias[f] += dz;
    }
}

/// Probability of the death class.
pub fn predict(params: &CnnParams, x: &FeatureMatrix) -> Result<f64> {
    Ok(forward(params, x)?[1])
}

/// Mini-batch SGD on the mean weighted cross-entropy of each batch.
pub fn train_cnn(data: &[FeatureMatrix], config: &CnnConfig) -> Result<CnnParams> {
    config.validate()?;
    let Some(first) = data.first() else {
        return Err(Error::Config("cnn training set is empty".into()));
    };
    let n_pos = data.iter().filter(|m| m.label).count();
    let n_neg = data.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("cnn training set"));
    }
    let mut rng = seed::rng(config.seed);
    let mut params = CnnParams::init(config.filters, config.width, first.n_features, &mut rng);
    for m in data {
        check_shape(&params, m)?;
    }
    let weights = if config.class_weighting {
        let n = data.len() as f64;
        [n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)]
    } else {
        [1.0, 1.0]
    };

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = CnnParams::zeros(config.filters, config.width, first.n_features);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for b in grad.blocks_mut() {
                b.fill(0.0);
            }
            for &i in batch {
                let m = &data[i];
                let w = weights[usize::from(m.label)];
                let fwd = forward_cached(&params, m)?;
                total += w * ce_loss(fwd.probs, m.label);
                accumulate(&params, m, m.label, w, &fwd, &mut grad);
            }
            params.axpy(-config.learning_rate / batch.len() as f64, &grad);
        }
        debug!("cnn epoch {epoch}: mean weighted loss {:.4}", total / data.len() as f64);
        if !params.is_finite() {
            return Err(Error::Diverged("cnn"));
        }
    }
    Ok(params)
}
