//! LQR gain synthesis, per-slot action computation, the reception/prediction
//! selectors, and the Kalman filter used by the event-triggered baseline.

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, Vector};
use crate::plant::LtiSystem;

/// Synthesizes the LQR feedback gain for `(A, B)` with weights `(Zs, Zu)`.
/// Returns the gain and the Riccati cost-to-go matrix.
pub fn synthesize_gain(a: &Matrix, b: &Matrix, zs: &Matrix, zu: &Matrix) -> Result<(Matrix, Matrix)> {
    let p_ric = numerics::solve_dare(a, b, zs, zu)?;
    let inner = b.transpose() * &p_ric * b + zu;
    let phi = numerics::psd_solve(&inner, &(b.transpose() * &p_ric * a))?;
    Ok((phi, p_ric))
}

/// Linear feedback law `u = -Phi x`.
pub fn compute_action(sys: &LtiSystem, x_c: &Vector) -> Vector {
    -(&sys.phi * x_c)
}

/// State available at the controller: the estimate when the uplink got
/// through this slot, the prediction otherwise.
pub fn select_controller_state(xi_u: bool, mmse_state: &Vector, gpr_state: &Vector) -> Vector {
    if xi_u {
        mmse_state.clone()
    } else {
        gpr_state.clone()
    }
}

/// Action available at the actuator: mirror of the controller-side selector.
pub fn select_actuator_action(xi_d: bool, mmse_action: &Vector, gpr_action: &Vector) -> Vector {
    if xi_d {
        mmse_action.clone()
    } else {
        gpr_action.clone()
    }
}

#[derive(Debug, Clone)]
pub struct KalmanState {
    pub mean: Vector,
    pub cov: Matrix,
}

impl KalmanState {
    pub fn new(mean: Vector, cov: Matrix) -> Self {
        Self { mean, cov }
    }
}

/// One predict step, plus a measurement update with identity observation
/// matrix when an observation is present.
pub fn kalman_predict_update(
    sys: &LtiSystem,
    kf: &KalmanState,
    u_prev: &Vector,
    observation: Option<(&Vector, &Matrix)>,
) -> Result<KalmanState> {
    let mut mean = &sys.a * &kf.mean + &sys.b * u_prev;
    let mut cov = &sys.a * &kf.cov * sys.a.transpose() + &sys.w;
    if let Some((y, obs_cov)) = observation {
        if y.len() != mean.len() {
            return Err(Error::Dimension("observation length disagrees with state".into()));
        }
        let s = numerics::symmetrize(&(&cov + obs_cov));
        // K = cov * S^{-1}; solve on the transposed system keeps it SPD.
        let k = numerics::psd_solve(&s, &cov.transpose())?.transpose();
        let innovation = y - &mean;
        mean += &k * innovation;
        let i_k = Matrix::identity(cov.nrows(), cov.ncols()) - &k;
        // Joseph form stays PSD even as obs_cov approaches zero.
        cov = numerics::symmetrize(&(&i_k * &cov * i_k.transpose() + &k * obs_cov * k.transpose()));
    }
    Ok(KalmanState::new(mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{self, pendulum_preset};

    fn scalar_system(a: f64, b: f64, w: f64) -> LtiSystem {
        LtiSystem::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::from_element(1, 1, w),
            Matrix::identity(1, 1),
            Matrix::identity(1, 1),
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn scalar_gain_matches_dare_oracle() {
        // a=2, b=1, unit weights: p = 2+sqrt(5), gain = 2p/(1+p)
        let sys = scalar_system(2.0, 1.0, 0.0);
        let p = 2.0 + 5.0_f64.sqrt();
        let expected = 2.0 * p / (1.0 + p);
        assert!((sys.phi[(0, 0)] - expected).abs() < 1e-9, "phi = {}", sys.phi[(0, 0)]);
        assert!((expected - 1.6180).abs() < 1e-4);
    }

    #[test]
    fn stable_plant_with_zero_state_cost_stays_stable() {
        let (phi, _) = synthesize_gain(
            &Matrix::from_element(1, 1, 0.5),
            &Matrix::from_element(1, 1, 1.0),
            &Matrix::zeros(1, 1),
            &Matrix::identity(1, 1),
        )
        .unwrap();
        let closed = 0.5 - phi[(0, 0)];
        assert!(closed.abs() < 1.0);
    }

    #[test]
    fn pendulum_closed_loop_is_stable() {
        let sys = pendulum_preset().unwrap();
        assert!(numerics::spectral_radius(&sys.closed_loop()).unwrap() < 1.0);
    }

    #[test]
    fn action_is_zero_at_origin_and_linear() {
        let sys = scalar_system(2.0, 1.0, 0.0);
        assert_eq!(compute_action(&sys, &Vector::zeros(1)).norm(), 0.0);
        let x = Vector::from_element(1, 0.3);
        let one = compute_action(&sys, &x);
        let two = compute_action(&sys, &(&x * 2.0));
        assert!((&one * 2.0 - two).norm() < 1e-14);
        let at_one = compute_action(&sys, &Vector::from_element(1, 1.0));
        assert!((at_one[0] + 1.6180).abs() < 1e-4);
    }

    #[test]
    fn selectors_follow_the_indicator() {
        let m = Vector::from_row_slice(&[1.0, 2.0]);
        let g = Vector::from_row_slice(&[3.0, 4.0]);
        assert_eq!(select_controller_state(true, &m, &g), m);
        assert_eq!(select_controller_state(false, &m, &g), g);
        assert_eq!(select_actuator_action(true, &m, &g), m);
        assert_eq!(select_actuator_action(false, &m, &g), g);
        // degenerate tie: identical candidates are indicator-invariant
        assert_eq!(
            select_controller_state(true, &m, &m),
            select_controller_state(false, &m, &m)
        );
    }

    #[test]
    fn kalman_tracks_exactly_without_noise() {
        let sys = scalar_system(2.0, 1.0, 0.0);
        let mut kf = KalmanState::new(Vector::from_element(1, 0.4), Matrix::zeros(1, 1));
        let mut x = Vector::from_element(1, 0.4);
        for k in 0..10 {
            let u = Vector::from_element(1, (k as f64 * 0.7).sin());
            x = plant::step(&sys, &x, &u, &Vector::zeros(1)).unwrap();
            kf = kalman_predict_update(&sys, &kf, &u, None).unwrap();
            assert!((kf.mean[0] - x[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn kalman_snaps_to_perfect_observation() {
        let sys = scalar_system(2.0, 1.0, 0.01);
        let kf = KalmanState::new(Vector::from_element(1, 0.0), Matrix::identity(1, 1));
        let y = Vector::from_element(1, 3.5);
        let tiny = Matrix::from_element(1, 1, 1e-14);
        let next = kalman_predict_update(&sys, &kf, &Vector::zeros(1), Some((&y, &tiny))).unwrap();
        assert!((next.mean[0] - 3.5).abs() < 1e-6);
        assert!(next.cov[(0, 0)] < 1e-6);
    }

    #[test]
    fn kalman_covariance_reaches_filter_riccati_fixed_point() {
        let (a, w, r) = (1.2, 0.04, 0.25);
        let sys = scalar_system(a, 1.0, w);
        let mut kf = KalmanState::new(Vector::zeros(1), Matrix::identity(1, 1));
        let y = Vector::zeros(1);
        let obs_cov = Matrix::from_element(1, 1, r);
        let mut predicted_cov = 0.0;
        for _ in 0..200 {
            predicted_cov = a * a * kf.cov[(0, 0)] + w;
            kf = kalman_predict_update(&sys, &kf, &Vector::zeros(1), Some((&y, &obs_cov))).unwrap();
        }
        // fixed-point iteration of the scalar filter Riccati recursion
        let mut p = 1.0;
        for _ in 0..10_000 {
            p = a * a * (p - p * p / (p + r)) + w;
        }
        assert!((predicted_cov - p).abs() < 1e-6, "cov {predicted_cov}, oracle {p}");
    }

    #[test]
    fn perfect_feedback_enters_error_region_within_horizon() {
        // pendulum with per-component noise variance 0.01, perfect state
        // feedback: |theta| dips below 0.05 within 90 steps for every seed
        let sys = plant::pendulum_preset_with(0.1, 0.01).unwrap();
        for seed in 0..10u64 {
            let mut rng = crate::rng::stream(seed, 0, crate::rng::Purpose::PlantNoise);
            let mut x = Vector::from_row_slice(&plant::PENDULUM_X0);
            let mut entered = false;
            for _ in 0..90 {
                if x[2].abs() < 0.05 {
                    entered = true;
                    break;
                }
                let u = compute_action(&sys, &x);
                let w = plant::draw_plant_noise(&sys, &mut rng);
                x = plant::step(&sys, &x, &u, &w).unwrap();
            }
            assert!(entered, "seed {seed} never entered the error region");
        }
    }

    #[test]
    fn kalman_covariance_monotone_with_observations() {
        let sys = scalar_system(0.9, 1.0, 0.0);
        let mut kf = KalmanState::new(Vector::zeros(1), Matrix::identity(1, 1));
        let y = Vector::zeros(1);
        let obs_cov = Matrix::from_element(1, 1, 0.1);
        let mut prev = kf.cov[(0, 0)];
        for _ in 0..50 {
            kf = kalman_predict_update(&sys, &kf, &Vector::zeros(1), Some((&y, &obs_cov))).unwrap();
            assert!(kf.cov[(0, 0)] <= prev + 1e-12);
            prev = kf.cov[(0, 0)];
        }
    }
}
