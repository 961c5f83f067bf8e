//! LTI plant dynamics, the inverted-pendulum preset and plant-noise draws.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::control;
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, Vector};

/// States with any component beyond this magnitude are treated as blown up.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Default plant-noise standard deviation per state component.
pub const DEFAULT_NOISE_STD: f64 = 0.001;

/// Default Lyapunov decay rate.
pub const DEFAULT_ZETA: f64 = 0.01;

/// Initial pendulum state: cart at rest, pendulum tilted 0.1 rad.
pub const PENDULUM_X0: [f64; 4] = [0.0, 0.0, 0.1, 0.0];

/// One linear control system: plant matrices, noise covariance, LQR weights,
/// the synthesized feedback gain and Lyapunov certificate.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    /// State transition, D x D.
    pub a: Matrix,
    /// Actuation, D x P.
    pub b: Matrix,
    /// Plant-noise covariance, D x D PSD.
    pub w: Matrix,
    /// State cost weight, D x D PSD.
    pub zs: Matrix,
    /// Action cost weight, P x P PD.
    pub zu: Matrix,
    /// LQR feedback gain, P x D.
    pub phi: Matrix,
    /// Lyapunov matrix solving the Stein equation for the closed loop.
    pub z: Matrix,
    /// Required per-slot decay rate of the expected Lyapunov value.
    pub zeta: f64,
    w_factor: Matrix,
}

impl LtiSystem {
    /// Builds a system and synthesizes its feedback gain and Lyapunov matrix.
    pub fn new(
        a: Matrix,
        b: Matrix,
        w: Matrix,
        zs: Matrix,
        zu: Matrix,
        zeta: f64,
    ) -> Result<Self> {
        let d = a.nrows();
        let p = b.ncols();
        if a.ncols() != d || b.nrows() != d {
            return Err(Error::Dimension("plant matrices A and B disagree".into()));
        }
        if w.nrows() != d || w.ncols() != d || zs.nrows() != d || zu.nrows() != p {
            return Err(Error::Dimension("plant weight/noise dimensions disagree".into()));
        }
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(Error::Config(format!("zeta must lie in (0, 1], got {zeta}")));
        }
        let (phi, _) = control::synthesize_gain(&a, &b, &zs, &zu)?;
        let closed = &a - &b * &phi;
        let rho = numerics::spectral_radius(&closed)?;
        if rho >= 1.0 {
            return Err(Error::NoSolution(format!(
                "synthesized gain leaves the closed loop unstable (rho = {rho:.6})"
            )));
        }
        let z = numerics::solve_lyapunov_matrix(&closed)?;
        let w_factor = numerics::psd_factor(&w)?;
        Ok(Self {
            a,
            b,
            w,
            zs,
            zu,
            phi,
            z,
            zeta,
            w_factor,
        })
    }

    /// Builds a system from pre-synthesized gain and Lyapunov matrices.
    /// Only dimension checks are performed; the caller vouches for
    /// closed-loop stability.
    #[allow(clippy::too_many_arguments)]
    pub fn with_gain(
        a: Matrix,
        b: Matrix,
        w: Matrix,
        zs: Matrix,
        zu: Matrix,
        phi: Matrix,
        z: Matrix,
        zeta: f64,
    ) -> Result<Self> {
        let d = a.nrows();
        let p = b.ncols();
        if phi.nrows() != p || phi.ncols() != d || z.nrows() != d {
            return Err(Error::Dimension("gain/Lyapunov dimensions disagree".into()));
        }
        let w_factor = numerics::psd_factor(&w)?;
        Ok(Self {
            a,
            b,
            w,
            zs,
            zu,
            phi,
            z,
            zeta,
            w_factor,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Closed-loop transition matrix A - B*Phi.
    pub fn closed_loop(&self) -> Matrix {
        &self.a - &self.b * &self.phi
    }
}

/// The discretized inverted pendulum on a cart (10 ms sampling), with unit
/// LQR weights and the default plant-noise level.
pub fn pendulum_preset() -> Result<LtiSystem> {
    pendulum_preset_with(DEFAULT_NOISE_STD, DEFAULT_ZETA)
}

/// The printed discrete-time pendulum matrices.
pub fn pendulum_matrices() -> (Matrix, Matrix) {
    let a = Matrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, 2.055, -0.722, 4.828, //
            0.0, 0.023, 0.91, 0.037, //
            0.0, 0.677, -0.453, 2.055,
        ],
    );
    let b = Matrix::from_row_slice(4, 1, &[0.034, 0.168, 0.019, 0.105]);
    (a, b)
}

/// Pendulum preset with explicit noise level and decay rate.
pub fn pendulum_preset_with(noise_std: f64, zeta: f64) -> Result<LtiSystem> {
    let (a, b) = pendulum_matrices();
    let w = Matrix::identity(4, 4) * noise_std * noise_std;
    LtiSystem::new(a, b, w, Matrix::identity(4, 4), Matrix::identity(1, 1), zeta)
}

/// Zero-order-hold discretization (10 ms) of a frictionless cart-pole
/// (cart 0.5 kg, pole point mass 0.2 kg at 0.55 m) linearized upright;
/// state [cart position, cart velocity, angle, angular velocity], input
/// force on the cart. Spectral radius 1.0125 per slot: unstable, but mild
/// enough that shared links and prediction can hold a fleet of them, which
/// is what the stock experiment configs exercise.
pub fn cartpole_matrices() -> (Matrix, Matrix) {
    let a = Matrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.01, -1.9624087841e-4, -6.5408175487e-7, //
            0.0, 1.0, -3.9256352044e-2, -1.9624087841e-4, //
            0.0, 0.0, 1.0012502604, 1.0004167188e-2, //
            0.0, 0.0, 2.5010417969e-1, 1.0012502604,
        ],
    );
    let b = Matrix::from_row_slice(
        4,
        1,
        &[1.00006e-4, 2.00023813e-2, -1.820679e-4, -3.64211708e-2],
    );
    (a, b)
}

/// Cart-pole preset used by the stock experiment configurations.
pub fn cartpole_preset_with(noise_std: f64, zeta: f64) -> Result<LtiSystem> {
    let (a, b) = cartpole_matrices();
    let w = Matrix::identity(4, 4) * noise_std * noise_std;
    LtiSystem::new(a, b, w, Matrix::identity(4, 4), Matrix::identity(1, 1), zeta)
}

/// One step of the plant dynamics: `A x + B u + noise`.
///
/// The harness supplies `u_applied` from whichever estimate/prediction path
/// resolved this slot, so this single kernel realizes every loop case.
pub fn step(sys: &LtiSystem, x: &Vector, u_applied: &Vector, noise: &Vector) -> Result<Vector> {
    if x.len() != sys.state_dim() || noise.len() != sys.state_dim() {
        return Err(Error::Dimension("state/noise length disagrees with plant".into()));
    }
    if u_applied.len() != sys.action_dim() {
        return Err(Error::Dimension("action length disagrees with plant".into()));
    }
    Ok(&sys.a * x + &sys.b * u_applied + noise)
}

/// Zero-mean Gaussian plant noise with covariance W.
pub fn draw_plant_noise<R: Rng>(sys: &LtiSystem, rng: &mut R) -> Vector {
    let d = sys.state_dim();
    let z = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    &sys.w_factor * z
}

/// True once any state component exceeds the divergence limit.
pub fn is_diverged(x: &Vector) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn pendulum_matches_printed_entries() {
        let sys = pendulum_preset().unwrap();
        assert_eq!(sys.a[(1, 1)], 2.055);
        assert_eq!(sys.b[(0, 0)], 0.034);
        assert_eq!(sys.state_dim(), 4);
        assert_eq!(sys.action_dim(), 1);
    }

    #[test]
    fn pendulum_spectral_radius() {
        let sys = pendulum_preset().unwrap();
        let rho = numerics::spectral_radius(&sys.a).unwrap();
        assert!((rho - 3.85).abs() < 0.01, "rho = {rho}");
        assert!(numerics::spectral_radius(&sys.closed_loop()).unwrap() < 1.0);
    }

    #[test]
    fn step_scales_third_column() {
        let sys = pendulum_preset().unwrap();
        let mut x = Vector::zeros(4);
        x[2] = 0.1;
        let next = step(&sys, &x, &Vector::zeros(1), &Vector::zeros(4)).unwrap();
        let expected = sys.a.column(2) * 0.1;
        assert!((next - expected).norm() < 1e-15);
    }

    #[test]
    fn step_identity_plant_returns_action() {
        let sys = LtiSystem::new(
            Matrix::identity(2, 2) * 0.0,
            Matrix::identity(2, 2),
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            Matrix::identity(2, 2),
            0.5,
        )
        .unwrap();
        let u = Vector::from_row_slice(&[1.0, 2.0]);
        // A = 0 isolates the actuation path; with B = I the next state is u.
        let next = step(&sys, &Vector::zeros(2), &u, &Vector::zeros(2)).unwrap();
        assert!((next - u).norm() < 1e-15);
    }

    #[test]
    fn step_arithmetic_case() {
        // diag(2, 3) with B = 0 is not stabilizable, so bypass synthesis.
        let sys = LtiSystem::with_gain(
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]),
            Matrix::zeros(2, 1),
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            Matrix::identity(1, 1),
            Matrix::zeros(1, 2),
            Matrix::identity(2, 2),
            0.5,
        )
        .unwrap();
        let x = Vector::from_row_slice(&[1.0, 0.0]);
        let noise = Vector::from_row_slice(&[0.5, -0.5]);
        let next = step(&sys, &x, &Vector::zeros(1), &noise).unwrap();
        assert!((next - Vector::from_row_slice(&[2.5, -0.5])).norm() < 1e-15);
    }

    #[test]
    fn noise_with_zero_covariance_is_zero() {
        let sys = LtiSystem::new(
            Matrix::from_row_slice(1, 1, &[2.0]),
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::zeros(1, 1),
            Matrix::identity(1, 1),
            Matrix::identity(1, 1),
            0.5,
        )
        .unwrap();
        let mut rng = stream(1, 0, Purpose::PlantNoise);
        for _ in 0..10 {
            assert_eq!(draw_plant_noise(&sys, &mut rng).norm(), 0.0);
        }
    }

    #[test]
    fn noise_sample_covariance_matches() {
        let sigma2 = 0.09;
        let sys = LtiSystem::new(
            Matrix::from_row_slice(1, 1, &[2.0]),
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::identity(1, 1) * sigma2,
            Matrix::identity(1, 1),
            Matrix::identity(1, 1),
            0.5,
        )
        .unwrap();
        let mut rng = stream(42, 0, Purpose::PlantNoise);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let v = draw_plant_noise(&sys, &mut rng)[0];
            acc += v * v;
        }
        let sample = acc / n as f64;
        assert!((sample - sigma2).abs() < 0.05 * sigma2, "sample var {sample}");
    }

    #[test]
    fn noise_is_reproducible() {
        let sys = pendulum_preset().unwrap();
        let mut a = stream(9, 3, Purpose::PlantNoise);
        let mut b = stream(9, 3, Purpose::PlantNoise);
        for _ in 0..20 {
            assert_eq!(draw_plant_noise(&sys, &mut a), draw_plant_noise(&sys, &mut b));
        }
    }

    #[test]
    fn perfect_feedback_contracts_geometrically() {
        let sys = pendulum_preset().unwrap();
        let rho = numerics::spectral_radius(&sys.closed_loop()).unwrap();
        let mut x = Vector::from_row_slice(&PENDULUM_X0);
        let x0_norm = x.norm();
        for _ in 0..50 {
            let u = -(&sys.phi * &x);
            x = step(&sys, &x, &u, &Vector::zeros(4)).unwrap();
        }
        // after 50 steps the norm should sit near rho^50 of the start,
        // certainly below a loose multiple of it
        assert!(x.norm() < 10.0 * x0_norm * rho.powi(50) + 1e-9, "norm {}", x.norm());
    }

    #[test]
    fn open_loop_grows_at_spectral_radius() {
        let sys = pendulum_preset().unwrap();
        let rho = numerics::spectral_radius(&sys.a).unwrap();
        let mut x = Vector::from_row_slice(&[0.01, 0.01, 0.01, 0.01]);
        let mut prev_norm = x.norm();
        let mut ratios = Vec::new();
        for _ in 0..10 {
            x = step(&sys, &x, &Vector::zeros(1), &Vector::zeros(4)).unwrap();
            ratios.push(x.norm() / prev_norm);
            prev_norm = x.norm();
        }
        let last = ratios.last().unwrap();
        assert!(
            (last.ln() - rho.ln()).abs() < 0.1 * rho.ln(),
            "growth ratio {last}, rho {rho}"
        );
    }

    #[test]
    fn step_is_exactly_linear() {
        let sys = pendulum_preset().unwrap();
        let x1 = Vector::from_row_slice(&[0.3, -0.2, 0.1, 0.05]);
        let x2 = Vector::from_row_slice(&[-0.1, 0.4, -0.3, 0.2]);
        let u1 = Vector::from_row_slice(&[0.7]);
        let u2 = Vector::from_row_slice(&[-0.4]);
        let n1 = Vector::from_row_slice(&[0.01, 0.02, -0.01, 0.0]);
        let n2 = Vector::from_row_slice(&[-0.02, 0.01, 0.03, -0.04]);
        let combined = step(&sys, &(&x1 + &x2), &(&u1 + &u2), &(&n1 + &n2)).unwrap();
        let split = step(&sys, &x1, &u1, &n1).unwrap() + step(&sys, &x2, &u2, &n2).unwrap();
        assert!((combined - split).amax() < 1e-12);
    }

    #[test]
    fn divergence_flag() {
        assert!(!is_diverged(&Vector::from_row_slice(&[1e5, 0.0])));
        assert!(is_diverged(&Vector::from_row_slice(&[2e6, 0.0])));
        assert!(is_diverged(&Vector::from_row_slice(&[f64::NAN, 0.0])));
    }
}
