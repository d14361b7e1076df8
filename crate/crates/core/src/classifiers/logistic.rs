//! Multinomial (softmax) logistic regression fitted by full-batch gradient
//! descent on mean cross-entropy plus `(l2 / 2) * ||W||^2`. Biases are not
//! penalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, Hyperparameters, ModelParams, TrainedModel};
use crate::error::{domain, Error, Result};
use crate::matrix::FeatureMatrix;

const CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            learning_rate: 0.1,
            l2_penalty: 1e-4,
            epochs: 500,
        }
    }
}

/// `weights` is `K x (d + 1)`, row-major, with the bias in the last column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub class_count: usize,
    pub n_features: usize,
    pub weights: Vec<f64>,
    /// Objective before each epoch, then after the last one.
    pub loss_history: Vec<f64>,
}

impl LogisticModel {
    pub fn score_row(&self, row: &[f64]) -> Vec<f64> {
        let mut z = logits(&self.weights, self.class_count, row);
        softmax_in_place(&mut z);
        z
    }
}

fn logits(weights: &[f64], k: usize, row: &[f64]) -> Vec<f64> {
    let stride = row.len() + 1;
    (0..k)
        .map(|c| {
            let w = &weights[c * stride..(c + 1) * stride];
            w[..row.len()].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + w[row.len()]
        })
        .collect()
}

fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    // log-sum-exp of the original logits
    max + sum.ln()
}

/// Objective and its gradient at `weights`.
///
/// Rows are processed in fixed chunks whose partial sums are added in
/// order, so the result does not depend on the thread count.
pub fn loss_and_gradient(data: &FeatureMatrix, weights: &[f64], l2_penalty: f64) -> (f64, Vec<f64>) {
    let d = data.n_cols();
    let k = data.class_count();
    let stride = d + 1;
    let partials: Vec<(f64, Vec<f64>)> = (0..data.n_rows())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK_ROWS)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; k * stride];
            for &i in chunk {
                let row = data.row(i);
                let y = data.labels()[i];
                let mut p = logits(weights, k, row);
                let z_y = p[y];
                loss += softmax_in_place(&mut p) - z_y;
                p[y] -= 1.0;
                for (c, &err) in p.iter().enumerate() {
                    let g = &mut grad[c * stride..(c + 1) * stride];
                    for (gj, xj) in g.iter_mut().zip(row) {
                        *gj += err * xj;
                    }
                    g[d] += err;
                }
            }
            (loss, grad)
        })
        .collect();

    let n = data.n_rows() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; k * stride];
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for c in 0..k {
        for j in 0..d {
            let w = weights[c * stride + j];
            loss += 0.5 * l2_penalty * w * w;
            grad[c * stride + j] += l2_penalty * w;
        }
    }
    (loss, grad)
}

pub fn train_logistic(data: &FeatureMatrix, params: &LogisticParams, seed: u64) -> Result<TrainedModel> {
    check_training_data(data)?;
    if params.epochs == 0 {
        return Err(domain!("logistic regression needs at least one epoch"));
    }
    if !(params.learning_rate > 0.0) || !(params.l2_penalty >= 0.0) {
        return Err(domain!("learning rate must be positive and the L2 penalty non-negative"));
    }
    let k = data.class_count();
    let mut weights = vec![0.0; k * (data.n_cols() + 1)];
    let mut history = Vec::with_capacity(params.epochs + 1);
    for epoch in 0..=params.epochs {
        let (loss, grad) = loss_and_gradient(data, &weights, params.l2_penalty);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        history.push(loss);
        if epoch < params.epochs {
            weights.iter_mut().zip(&grad).for_each(|(w, g)| *w -= params.learning_rate * g);
        }
    }
    log::debug!("logistic: final loss {:.6}", history[params.epochs]);
    let model = LogisticModel {
        class_count: k,
        n_features: data.n_cols(),
        weights,
        loss_history: history,
    };
    Ok(TrainedModel::new(
        data,
        Hyperparameters::Logistic(*params),
        seed,
        ModelParams::Logistic(model),
    ))
}
