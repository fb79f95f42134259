//! Estimation accuracy and support recovery scores.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Magnitude above which a coefficient counts as selected.
pub const SUPPORT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    /// `‖β̂ − β‖₂ / ‖β‖₂`; NaN when the truth is zero.
    pub relative_error: f64,
    /// False when `relative_error` is undefined.
    pub relative_error_defined: bool,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Scores `beta_hat` against `truth`. F1 is `2TP / (2TP + FP + FN)`, taken
/// as 1 when both supports are empty.
pub fn compute_metrics(
    beta_hat: ArrayView1<f64>,
    truth: ArrayView1<f64>,
    support_tol: f64,
) -> Result<Metrics> {
    check_len("estimate", truth.len(), beta_hat.len())?;
    let diff = &beta_hat - &truth;
    let sq = diff.dot(&diff);
    let n = truth.len().max(1) as f64;
    let truth_norm = truth.dot(&truth).sqrt();
    let (relative_error, relative_error_defined) = if truth_norm > 0.0 {
        (sq.sqrt() / truth_norm, true)
    } else {
        (f64::NAN, false)
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (b, t) in beta_hat.iter().zip(truth.iter()) {
        match (b.abs() > support_tol, *t != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok(Metrics {
        mse: sq / n,
        relative_error,
        relative_error_defined,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    })
}
