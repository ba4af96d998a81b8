//! Cross-entropy, Gaussian KL divergence and mean-squared error, each with
//! an unbatched scalar form and a batched form returning its gradient.

use super::Tensor;
use crate::{Error, Result};

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub fn ce_loss(logits: &Tensor, label: usize) -> Result<f64> {
    let classes = logits.len();
    if label >= classes {
        return Err(Error::InvalidLabel { label, classes });
    }
    let row = logits.data();
    Ok(log_sum_exp(row) - row[label])
}

/// KL(N(mu, exp(logvar)) ‖ N(0, I)) summed over latent dimensions.
pub fn kld_loss(mu: &Tensor, logvar: &Tensor) -> Result<f64> {
    logvar.ensure_shape(mu.shape())?;
    Ok(mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum())
}

pub fn mse_loss(xhat: &Tensor, x: &Tensor) -> Result<f64> {
    x.ensure_shape(xhat.shape())?;
    let n = x.len() as f64;
    Ok(xhat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Mean cross-entropy over a `[B, C]` batch and its gradient w.r.t. logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (rows, classes) = (logits.rows(), logits.cols());
    if labels.len() != rows {
        return Err(Error::shape(&[rows], &[labels.len()]));
    }
    let scale = 1.0 / rows as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(rows * classes);
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidLabel { label, classes });
        }
        let row = logits.row(r);
        loss += log_sum_exp(row) - row[label];
        let p = softmax(row);
        grad.extend(
            p.iter()
                .enumerate()
                .map(|(j, &pj)| scale * (pj - if j == label { 1.0 } else { 0.0 })),
        );
    }
    Ok((loss * scale, Tensor::matrix(rows, classes, grad)?))
}

/// Batch-mean KL divergence with gradients `(d/dmu, d/dlogvar)`.
pub fn kld_with_grad(mu: &Tensor, logvar: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    logvar.ensure_shape(mu.shape())?;
    let scale = 1.0 / mu.rows() as f64;
    let mut loss = 0.0;
    let mut dmu = Vec::with_capacity(mu.len());
    let mut dlv = Vec::with_capacity(mu.len());
    for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
        let e = lv.exp();
        loss += -0.5 * (1.0 + lv - m * m - e);
        dmu.push(scale * m);
        dlv.push(scale * 0.5 * (e - 1.0));
    }
    Ok((
        loss * scale,
        Tensor::new(mu.shape().to_vec(), dmu)?,
        Tensor::new(mu.shape().to_vec(), dlv)?,
    ))
}

/// Element-mean squared error and its gradient w.r.t. `xhat`.
pub fn mse_with_grad(xhat: &Tensor, x: &Tensor) -> Result<(f64, Tensor)> {
    x.ensure_shape(xhat.shape())?;
    let n = x.len() as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = xhat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| {
            let d = a - b;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, Tensor::new(xhat.shape().to_vec(), grad)?))
}
