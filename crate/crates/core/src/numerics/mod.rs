//! Scalar activations, losses, a small row-major matrix, Adam, and a
//! finite-difference gradient oracle.
//!
//! Everything here runs in `f64` and uses `libm` for transcendental
//! functions so results are bit-identical across hosts.

mod adam;
mod gradcheck;
mod matrix;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use matrix::Matrix;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// GELU in the exact erf form, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// Derivative of [`gelu`]: `Phi(x) + x * phi(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

// Smallest value strictly inside (0, 1) at either end.
const SIGMOID_LO: f64 = f64::MIN_POSITIVE * f64::EPSILON;
const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function. Saturates at the nearest representable values inside
/// the open unit interval, so the result is never exactly 0 or 1.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_LO, SIGMOID_HI)
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// Binary cross-entropy on a logit, `max(l, 0) - l*y + log(1 + exp(-|l|))`.
pub fn bce_with_logit(logit: f64, label: u8) -> f64 {
    let y = if label == 0 { 0.0 } else { 1.0 };
    logit.max(0.0) - logit * y + libm::log1p(libm::exp(-logit.abs()))
}

/// d/dlogit of [`bce_with_logit`].
pub fn bce_with_logit_grad(logit: f64, label: u8) -> f64 {
    let y = if label == 0 { 0.0 } else { 1.0 };
    // Unclamped logistic so the gradient stays exact in the tails.
    let s = if logit >= 0.0 {
        1.0 / (1.0 + libm::exp(-logit))
    } else {
        let e = libm::exp(logit);
        e / (1.0 + e)
    };
    s - y
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| libm::exp(l - max)).sum();
    max + libm::log(sum)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[target]`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::invalid("invalid target index"));
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// Gradient of [`softmax_cross_entropy`] with respect to the logits.
pub fn softmax_cross_entropy_grad(logits: &[f64], target: usize) -> Result<Vec<f64>> {
    if target >= logits.len() {
        return Err(Error::invalid("invalid target index"));
    }
    let mut g = softmax(logits);
    g[target] -= 1.0;
    Ok(g)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}
