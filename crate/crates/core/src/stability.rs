//! Quadratic Lyapunov accounting and the scheduling lower bounds implied by
//! the per-slot decay requirement
//! `E[L(x_{k+1})] <= zeta * E[L(x_k)]`.

use crate::numerics::{Matrix, Vector};
use crate::plant::LtiSystem;

const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Feasibility clamp into [0, 1].
pub fn g_lb(x: f64) -> f64 {
    x.min(1.0).max(0.0)
}

/// Expected current Lyapunov value given the predicted state and its error
/// covariance: `x̂ᵀ Z x̂ + Tr(Z J_u)`.
pub fn expected_lyapunov(sys: &LtiSystem, x_hat: &Vector, j_u: &Matrix) -> f64 {
    (x_hat.transpose() * &sys.z * x_hat)[(0, 0)] + (&sys.z * j_u).trace()
}

/// Lower bounds on the scheduling rates of the uplink, the downlink and the
/// coupled pair, raw and clamped into [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct StabilityBounds {
    pub raw_u: f64,
    pub raw_d: f64,
    pub raw_ud: f64,
    pub clamped_u: f64,
    pub clamped_d: f64,
    pub clamped_ud: f64,
}

/// Evaluates the three scheduling lower bounds from the predicted state, the
/// prediction error covariances (J) and the candidate estimation error
/// covariances (V) of both directions.
///
/// Shared numerator:
/// `N = ||(Ac - zeta I) x̂||²_Z + Tr[(Aᵀ Z A - zeta Z) J_u] + Tr[Bᵀ Z B J_d] + Tr[Z W]`
///
/// Denominators measure how much scheduling shrinks the uncertainty:
/// uplink `Tr[(BΦ)ᵀ Z (BΦ) (J_u - V_u)]`, downlink `Tr[Bᵀ Z B (J_d - V_d)]`,
/// coupled their sum. A denominator at or below zero means scheduling cannot
/// reduce uncertainty: the bound is then forced to 1 when N > 0 and dropped
/// to 0 otherwise.
pub fn stability_bounds(
    sys: &LtiSystem,
    x_hat: &Vector,
    j_u: &Matrix,
    j_d: &Matrix,
    v_u: &Matrix,
    v_d: &Matrix,
) -> StabilityBounds {
    let z = &sys.z;
    let zeta = sys.zeta;
    let d = sys.state_dim();
    let ac = sys.closed_loop();
    let shifted = &ac - Matrix::identity(d, d) * zeta;
    let sx = &shifted * x_hat;

    let n = (sx.transpose() * z * &sx)[(0, 0)]
        + ((sys.a.transpose() * z * &sys.a - z * zeta) * j_u).trace()
        + (sys.b.transpose() * z * &sys.b * j_d).trace()
        + (z * &sys.w).trace();

    let b_phi = &sys.b * &sys.phi;
    let gain_quad = b_phi.transpose() * z * &b_phi;
    let act_quad = sys.b.transpose() * z * &sys.b;

    let den_u = (&gain_quad * (j_u - v_u)).trace();
    let den_d = (&act_quad * (j_d - v_d)).trace();
    let den_ud = den_u + den_d;

    let (raw_u, clamped_u) = bound_from(n, den_u);
    let (raw_d, clamped_d) = bound_from(n, den_d);
    let (raw_ud, clamped_ud) = bound_from(n, den_ud);
    StabilityBounds {
        raw_u,
        raw_d,
        raw_ud,
        clamped_u,
        clamped_d,
        clamped_ud,
    }
}

fn bound_from(n: f64, den: f64) -> (f64, f64) {
    if den <= DEGENERATE_DENOMINATOR {
        if n > 0.0 {
            (f64::INFINITY, 1.0)
        } else {
            (0.0, 0.0)
        }
    } else {
        let raw = n / den;
        (raw, g_lb(raw))
    }
}

/// Closed-form expected next-slot Lyapunov value for one realized indicator
/// pair, against the decay budget `zeta * E[L(x_k)]`. Branch structure:
///
/// * received uplink  -> state error is the estimation error `V_u` through
///   the gain, and the closed loop acts on the prediction error exactly;
/// * missed uplink    -> the full open-loop matrix acts on the prediction
///   error (`Tr[Aᵀ Z A J_u]`);
/// * received downlink -> action error is `V_d`; missed -> `J_d`.
///
/// Used by tests and diagnostics, not by the scheduler.
#[allow(clippy::too_many_arguments)]
pub fn verify_decay(
    sys: &LtiSystem,
    x_hat: &Vector,
    j_u: &Matrix,
    j_d: &Matrix,
    v_u: &Matrix,
    v_d: &Matrix,
    xi_u: bool,
    xi_d: bool,
) -> (f64, f64, bool) {
    let z = &sys.z;
    let ac = sys.closed_loop();
    let acx = &ac * x_hat;
    let b_phi = &sys.b * &sys.phi;
    let gain_quad = b_phi.transpose() * z * &b_phi;
    let act_quad = sys.b.transpose() * z * &sys.b;

    let state_term = if xi_u {
        (ac.transpose() * z * &ac * j_u).trace() + (&gain_quad * v_u).trace()
    } else {
        (sys.a.transpose() * z * &sys.a * j_u).trace()
    };
    let action_term = if xi_d {
        (&act_quad * v_d).trace()
    } else {
        (&act_quad * j_d).trace()
    };

    let lhs = (acx.transpose() * z * &acx)[(0, 0)] + state_term + action_term + (z * &sys.w).trace();
    let rhs = sys.zeta * expected_lyapunov(sys, x_hat, j_u);
    (lhs, rhs, lhs <= rhs)
}
