use crate::error::{Error, Result};
use crate::group::{ActiveSet, GroupSignal};

use super::ProblemInstance;

/// `found == truth`.
pub fn exact_recovery(found: &ActiveSet, truth: &ActiveSet) -> bool {
    found == truth
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `||x_hat - x_true|| / ||x_true||`, or the absolute error when
    /// `x_true == 0` (see `relative`).
    pub error: f64,
    /// `false` when `x_true == 0` and `error` is absolute.
    pub relative: bool,
    pub exact_recovery: bool,
    /// `10 log10(V^2 / MSE)` with `V = max |x_hat_i|`.
    pub psnr: f64,
    /// `||Psi x_hat - y||`.
    pub residual_norm: f64,
    pub n_active: usize,
}

pub fn metrics(x_hat: &GroupSignal, instance: &ProblemInstance) -> Result<Metrics> {
    let truth = &instance.x_true.values;
    if x_hat.values.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has length {}, truth {}",
            x_hat.values.len(),
            truth.len()
        )));
    }
    let diff = &x_hat.values - truth;
    let abs_err = diff.norm();
    let truth_norm = truth.norm();
    let (error, relative) = if truth_norm > 0.0 {
        (abs_err / truth_norm, true)
    } else {
        (abs_err, false)
    };
    let peak = x_hat.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mse = diff.norm_squared() / diff.len() as f64;
    let psnr = 10.0 * (peak * peak / mse).log10();
    let residual = instance.design.apply(x_hat)? - &instance.y;
    let support = x_hat.support();
    Ok(Metrics {
        error,
        relative,
        exact_recovery: exact_recovery(&support, &instance.true_active),
        psnr,
        residual_norm: residual.norm(),
        n_active: support.len(),
    })
}
