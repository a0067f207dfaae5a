//! Weighted fine-tuning of a surrogate sequence head under frozen QA weights.

mod head;
mod train;

pub use head::{head_input, predict, predict_tokens, HeadConfig, SurrogateHead};
pub use train::{
    task_loss_and_grad, train_stage1, write_run_log, TrainRun, TrainRunConfig, TrainSelection,
    WeightSource,
};

use crate::corpus::IGNORE_INDEX;
use crate::error::{Error, Result};
use crate::numerics::{softmax_cross_entropy, softmax_cross_entropy_grad};

fn supervised(targets: &[i64]) -> impl Iterator<Item = (usize, usize)> + '_ {
    targets
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != IGNORE_INDEX)
        .map(|(i, &t)| (i, t as usize))
}

fn check_lengths(logits: &[Vec<f64>], targets: &[i64]) -> Result<usize> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} target positions",
            logits.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|&t| t < 0 && t != IGNORE_INDEX) {
        return Err(Error::invalid("invalid target index"));
    }
    let n = supervised(targets).count();
    if n == 0 {
        return Err(Error::invalid("sample has no supervised tokens"));
    }
    Ok(n)
}

/// Mean token cross-entropy over the non-IGNORE positions.
pub fn per_sample_loss(logits: &[Vec<f64>], targets: &[i64]) -> Result<f64> {
    let n = check_lengths(logits, targets)?;
    let mut sum = 0.0;
    for (t, target) in supervised(targets) {
        sum += softmax_cross_entropy(&logits[t], target)?;
    }
    Ok(sum / n as f64)
}

/// Gradient of [`per_sample_loss`] with respect to every logit. IGNORE rows are zero.
pub fn per_sample_loss_grad(logits: &[Vec<f64>], targets: &[i64]) -> Result<Vec<Vec<f64>>> {
    let n = check_lengths(logits, targets)? as f64;
    let mut grad: Vec<Vec<f64>> = logits.iter().map(|row| vec![0.0; row.len()]).collect();
    for (t, target) in supervised(targets) {
        grad[t] = softmax_cross_entropy_grad(&logits[t], target)?
            .into_iter()
            .map(|g| g / n)
            .collect();
    }
    Ok(grad)
}

/// `(1/B) * sum_i w_i * loss_i`. The divisor is the batch size, not the weight sum.
pub fn weighted_batch_loss(per_sample: &[f64], weights: &[f64]) -> Result<f64> {
    if per_sample.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} per-sample losses but {} weights",
            per_sample.len(),
            weights.len()
        )));
    }
    if per_sample.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("sample weights must be finite and non-negative"));
    }
    let total: f64 = per_sample.iter().zip(weights).map(|(l, w)| w * l).sum();
    Ok(total / per_sample.len() as f64)
}
