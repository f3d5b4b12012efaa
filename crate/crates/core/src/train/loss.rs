//! Softmax and cross-entropy over relation logits.

use crate::error::{Error, Result};
use crate::nn::Matrix;

fn check_finite(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Numeric("empty logit vector".into()));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit {v}")));
    }
    Ok(())
}

/// `log(sum(exp(a)))`, evaluated after subtracting the maximum.
pub fn logsumexp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|a| (a - max).exp()).sum::<f64>().ln()
}

/// `p_i = exp(a_i) / sum_j exp(a_j)`.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|a| (a - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `-sum_i y_i log p_i` for a one-hot `y` at `label`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::Input(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Numeric("invalid probability vector".into()));
    }
    // ln(0) is the only way to leave the finite range; clamp to the smallest
    // positive double so the loss stays finite.
    Ok(-probs[label].max(f64::MIN_POSITIVE).ln())
}

/// Fused `-(a_y - logsumexp(a))` and its gradient `p - y` with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_finite(logits)?;
    if label >= logits.len() {
        return Err(Error::Input(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let loss = logsumexp(logits) - logits[label];
    let mut grad = softmax(logits)?;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Batch statistics of the fused loss.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    /// Mean loss over the batch.
    pub loss: f64,
    /// Gradient of the mean loss with respect to each logit row.
    pub dlogits: Matrix,
    /// Number of rows whose argmax equals the label.
    pub correct: usize,
    pub predictions: Vec<usize>,
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn batch_softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<BatchLoss> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Input(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(labels.len());
    for (r, &y) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(r), y)?;
        total += l;
        for (d, gv) in dlogits.row_mut(r).iter_mut().zip(g) {
            *d = gv / n;
        }
        let pred = argmax(logits.row(r));
        correct += usize::from(pred == y);
        predictions.push(pred);
    }
    Ok(BatchLoss {
        loss: total / n,
        dlogits,
        correct,
        predictions,
    })
}
