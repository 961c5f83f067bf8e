//! Small dense real-matrix kernels shared by all modules: spectral radius,
//! the discrete-time algebraic Riccati equation, the Stein (discrete
//! Lyapunov) equation and symmetric positive-definite solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Frobenius-norm tolerance below which a DARE/Stein solution is accepted.
pub const EQUATION_RESIDUAL_TOL: f64 = 1e-8;

const DARE_MAX_ITER: usize = 100_000;
const DARE_STEP_TOL: f64 = 1e-12;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let schur = m
        .clone()
        .try_schur(1e-14, 100_000)
        .ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max))
}

/// Solve the DARE
/// `P = AᵀPA − AᵀPB (BᵀPB + Zu)⁻¹ BᵀPA + Zs`
/// by value iteration from `P = Zs`, stopping when the Frobenius step is
/// below 1e-12. Fails if the residual tolerance is not reached, which is
/// how a non-stabilizable pair surfaces.
pub fn solve_dare(a: &Matrix, b: &Matrix, zs: &Matrix, zu: &Matrix) -> Result<Matrix> {
    let d = a.nrows();
    let p_dim = b.ncols();
    if a.ncols() != d || b.nrows() != d || zs.nrows() != d || zs.ncols() != d {
        return Err(Error::Dimension("DARE state dimensions disagree".into()));
    }
    if zu.nrows() != p_dim || zu.ncols() != p_dim {
        return Err(Error::Dimension("DARE action-cost dimension disagrees".into()));
    }

    let mut p = zs.clone();
    for _ in 0..DARE_MAX_ITER {
        let next = riccati_step(a, b, zs, zu, &p)?;
        let step = (&next - &p).norm();
        p = next;
        if step < DARE_STEP_TOL {
            break;
        }
    }
    let residual = (&p - riccati_step(a, b, zs, zu, &p)?).norm();
    if residual > EQUATION_RESIDUAL_TOL {
        return Err(Error::NoSolution(format!(
            "DARE iteration stalled at residual {residual:.3e}"
        )));
    }
    Ok(p)
}

fn riccati_step(a: &Matrix, b: &Matrix, zs: &Matrix, zu: &Matrix, p: &Matrix) -> Result<Matrix> {
    let atp = a.transpose() * p;
    let btp = b.transpose() * p;
    let inner = &btp * b + zu;
    // (BᵀPB + Zu)⁻¹ BᵀPA via an SPD solve keeps the step symmetric.
    let gain = psd_solve(&inner, &(&btp * a))?;
    let next = &atp * a - atp * b * gain + zs;
    Ok(symmetrize(&next))
}

/// Solve the Stein equation `AᵀZA − Z = −I` for `Z`, positive definite
/// whenever `ρ(A) < 1`. Uses the Kronecker vectorization, exact for the
/// small state dimensions used here.
pub fn solve_lyapunov_matrix(ac: &Matrix) -> Result<Matrix> {
    let d = ac.nrows();
    if ac.ncols() != d {
        return Err(Error::Dimension("Stein equation needs a square matrix".into()));
    }
    let rho = spectral_radius(ac)?;
    if rho >= 1.0 {
        return Err(Error::NoSolution(format!(
            "no positive-definite Stein solution: spectral radius {rho:.6} >= 1"
        )));
    }

    // vec(AᵀZA) = (Aᵀ ⊗ Aᵀ) vec(Z), so (Aᵀ ⊗ Aᵀ − I) vec(Z) = vec(−I).
    let at = ac.transpose();
    let system = at.kronecker(&at) - Matrix::identity(d * d, d * d);
    let rhs = Vector::from_iterator(d * d, (-Matrix::identity(d, d)).iter().copied());
    let vec_z = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Stein system".into()))?;
    let z = symmetrize(&Matrix::from_iterator(d, d, vec_z.iter().copied()));

    let residual = (ac.transpose() * &z * ac - &z + Matrix::identity(d, d)).norm();
    if residual > EQUATION_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "Stein residual {residual:.3e} above tolerance"
        )));
    }
    if nalgebra::Cholesky::new(z.clone()).is_none() {
        return Err(Error::NoSolution("Stein solution is not positive definite".into()));
    }
    Ok(z)
}

/// Solve `A X = B` for symmetric positive-definite `A` via Cholesky.
pub fn psd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("psd_solve needs a square matrix".into()));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension("psd_solve right-hand side height disagrees".into()));
    }
    if !is_symmetric(a, 1e-10) {
        return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
    }
    let chol = nalgebra::Cholesky::new(a.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

/// Symmetric factor `S` with `S Sᵀ = m` for a symmetric PSD matrix.
/// Tolerates slightly negative eigenvalues from roundoff and maps them to 0,
/// so degenerate covariances (including the zero matrix) are valid inputs.
pub fn psd_factor(m: &Matrix) -> Result<Matrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("psd_factor needs a square matrix".into()));
    }
    if !is_symmetric(m, 1e-10) {
        return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
    }
    let scale = m.norm().max(1.0);
    let eig = symmetrize(m).symmetric_eigen();
    let mut factor = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-10 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalue {lambda:.3e} below tolerance"
            )));
        }
        let root = lambda.max(0.0).sqrt();
        for i in 0..factor.nrows() {
            factor[(i, j)] *= root;
        }
    }
    Ok(factor)
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.norm().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}
