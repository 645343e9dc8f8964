//! Central finite-difference check of [`ModelSpec::backward`].
//!
//! For coordinate `i` the numeric derivative is `(L(w + h·eᵢ) − L(w − h·eᵢ)) / 2h`.
//! The relative error against the analytic value `a` is
//! `|a − n| / max(|a|, |n|, REL_ERR_FLOOR)`; the floor keeps coordinates whose
//! true derivative is ~0 from dividing rounding noise by itself.
//! A coordinate is skipped when either perturbation changes a ReLU sign or a
//! pooling argmax, since the loss is not differentiable across that kink.

use super::{Batch, ModelSpec};
use crate::error::Result;
use crate::ndcore::WeightVector;

/// Denominator floor of the relative error. A central difference with
/// `h = 1e-5` resolves a loss change of one ulp of `L ≈ 2` as ~2e-11 in
/// slope, so with a few ulps of forward-pass rounding a 1e-6 relative error
/// is only meaningful for derivatives of at least ~1e-4.
pub const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Coordinate attaining `max_rel_err`.
    pub worst_index: usize,
    pub checked: usize,
    pub skipped_kinks: usize,
}

pub fn check_gradient(spec: &ModelSpec, w: &WeightVector, batch: &Batch, h: f64, coords: &[usize]) -> Result<GradCheck> {
    let (_, grad) = spec.backward(w, batch)?;
    let (_, base) = spec.loss_and_fingerprint(w, batch)?;
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst_index: 0,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut probe = w.clone();
    for &i in coords {
        let orig = w.values()[i];
        probe.values_mut()[i] = orig + h;
        let (plus, fp_plus) = spec.loss_and_fingerprint(&probe, batch)?;
        probe.values_mut()[i] = orig - h;
        let (minus, fp_minus) = spec.loss_and_fingerprint(&probe, batch)?;
        probe.values_mut()[i] = orig;
        if fp_plus != base || fp_minus != base {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grad.values()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Every coordinate of `w`.
pub fn check_all(spec: &ModelSpec, w: &WeightVector, batch: &Batch, h: f64) -> Result<GradCheck> {
    let coords: Vec<usize> = (0..w.len()).collect();
    check_gradient(spec, w, batch, h, &coords)
}
