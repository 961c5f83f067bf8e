//! Linear MMSE restoration of a transmitted vector from its noisy analog
//! reception, together with the estimator gain and error covariance.

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, Vector};

#[derive(Debug, Clone)]
pub struct MmseResult {
    /// Restored signal.
    pub estimate: Vector,
    /// Estimation error covariance, F x F PSD.
    pub error_cov: Matrix,
    /// Linear estimator gain, F x F.
    pub gain: Matrix,
}

/// MMSE estimate of `q` from `y = sqrt(P) H q + n` with source prior
/// `q ~ N(0, Sq)` and receiver noise `n ~ N(0, N0 I)`:
///
/// gain      = sqrt(P) Sq Hᵀ (P H Sq Hᵀ + N0 I)⁻¹
/// estimate  = gain y
/// error_cov = Sq − gain sqrt(P) H Sq
pub fn mmse_estimate(y: &Vector, h: &Matrix, power: f64, n0: f64, sq: &Matrix) -> Result<MmseResult> {
    let f = h.nrows();
    if h.ncols() != f || sq.nrows() != f || sq.ncols() != f || y.len() != f {
        return Err(Error::Dimension("MMSE operands disagree in dimension".into()));
    }
    if power <= 0.0 {
        return Err(Error::Contract("MMSE estimation needs positive transmit power".into()));
    }
    let sqrt_p = power.sqrt();
    let inner = numerics::symmetrize(&(h * sq * h.transpose() * power)) + Matrix::identity(f, f) * n0;
    // gainᵀ = inner⁻¹ (sqrt(P) H Sq), using Sq symmetry.
    let gain = numerics::psd_solve(&inner, &(h * sq * sqrt_p))?.transpose();
    let estimate = &gain * y;
    let error_cov = numerics::symmetrize(&(sq - &gain * h * sq * sqrt_p));
    Ok(MmseResult {
        estimate,
        error_cov,
        gain,
    })
}

/// MMSE error covariance alone, for callers that evaluate a candidate power
/// before any signal exists.
pub fn mmse_error_cov(h: &Matrix, power: f64, n0: f64, sq: &Matrix) -> Result<Matrix> {
    let y = Vector::zeros(h.nrows());
    Ok(mmse_estimate(&y, h, power, n0, sq)?.error_cov)
}
