//! Continuous-time algebraic Riccati solver for small dense systems.
//!
//! `solve_care` finds the stabilizing solution of
//!
//! ```text
//! 0 = S A + A' S - S B R^-1 B' S + Q
//! ```
//!
//! by extracting the stable invariant subspace of the Hamiltonian matrix
//! with a scaled matrix-sign iteration, then polishing with Newton-Kleinman
//! steps (each one a small Lyapunov solve) until the residual max-norm is
//! below [`RESIDUAL_TOL`]. Sizes here are 1x1 and 2x2, so dense inverses and
//! Kronecker-product Lyapunov solves are the simplest robust choice.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Residual max-norm the returned solution is guaranteed to satisfy.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Stabilizing Riccati solution `s` and gain `k = R^-1 B' S`.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub s: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Max-norm of the Riccati residual at `s`.
pub fn residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> f64 {
    let res = s * a + a.transpose() * s - s * b * r_inv * b.transpose() * s + q;
    res.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Matrix sign of `h` via determinant-scaled Newton iteration.
///
/// Fails if `h` is (numerically) singular or has imaginary-axis eigenvalues,
/// which for the Hamiltonian means the pair is not stabilizable/detectable.
fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = h.nrows();
    let mut z = h.clone();
    let mut converged = false;
    for _ in 0..100 {
        let z_inv = z.clone().try_inverse().ok_or_else(|| {
            Error::Synthesis("Hamiltonian is singular in the sign iteration".into())
        })?;
        let det = z.determinant().abs();
        let c = if det.is_finite() && det > 0.0 {
            det.powf(1.0 / m as f64).clamp(1e-8, 1e8)
        } else {
            1.0
        };
        let z_next = (&z / c + z_inv * c) * 0.5;
        let diff = (&z_next - &z).norm();
        let scale = z.norm().max(1.0);
        z = z_next;
        if diff <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Synthesis(
            "matrix sign iteration did not converge (eigenvalues too close to the imaginary axis)"
                .into(),
        ));
    }
    let involution_err = (&z * &z - DMatrix::identity(m, m)).norm();
    if involution_err > 1e-6 {
        return Err(Error::Synthesis(format!(
            "matrix sign defect {involution_err:.3e}; no stabilizing solution"
        )));
    }
    Ok(z)
}

/// Solve the Lyapunov equation `A' X + X A = -C` through its Kronecker form.
fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice((-c).as_slice());
    let x = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Synthesis("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

fn validate_inputs(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Synthesis(format!(
            "inconsistent shapes: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let finite = a.iter().chain(b.iter()).chain(q.iter()).chain(r.iter());
    if finite.clone().any(|v| !v.is_finite()) {
        return Err(Error::Synthesis("non-finite matrix entry".into()));
    }
    if b.iter().all(|v| *v == 0.0) {
        return Err(Error::Synthesis("B must be nonzero".into()));
    }
    if (q - q.transpose()).norm() > 1e-12 * q.norm().max(1.0) {
        return Err(Error::Synthesis("Q must be symmetric".into()));
    }
    if q.clone().symmetric_eigenvalues().iter().any(|&e| e < -1e-12) {
        return Err(Error::Synthesis("Q must be positive semidefinite".into()));
    }
    if r.clone().symmetric_eigenvalues().iter().any(|&e| e <= 0.0) {
        return Err(Error::Synthesis("R must be positive definite".into()));
    }
    Ok(())
}

/// Stabilizing CARE solution for `(A, B, Q, R)` of any (small) size.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<CareSolution> {
    validate_inputs(a, b, q, r)?;
    let n = a.nrows();
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("R is singular".into()))?;
    let g = b * &r_inv * b.transpose();

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    // sign(H) acts as -I on the stable invariant subspace spanned by
    // [I; S], so S solves the stacked system below in the least-squares
    // sense (it is consistent up to rounding).
    let w = matrix_sign(&h)?;
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let svd = lhs.svd(true, true);
    let s0 = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Synthesis(format!("subspace extraction failed: {e}")))?;
    let mut s = symmetrize(&s0);

    // Newton-Kleinman polish: quadratically contracting once the iterate
    // is stabilizing, which the sign-function seed guarantees.
    let mut res = residual(a, b, q, &r_inv, &s);
    for _ in 0..50 {
        if res < RESIDUAL_TOL {
            break;
        }
        let k = &r_inv * b.transpose() * &s;
        let a_cl = a - b * &k;
        let c = q + k.transpose() * r * &k;
        s = lyapunov(&a_cl, &c)?;
        let next = residual(a, b, q, &r_inv, &s);
        res = next;
    }
    if !(res < RESIDUAL_TOL) {
        return Err(Error::Synthesis(format!(
            "Riccati residual {res:.3e} above {RESIDUAL_TOL:.0e}"
        )));
    }

    // The solution must be PSD and stabilizing.
    let eig_floor = -1e-12 * (1.0 + s.norm());
    if s.clone().symmetric_eigenvalues().iter().any(|&e| e < eig_floor) {
        return Err(Error::Synthesis("solution is not positive semidefinite".into()));
    }
    let k = &r_inv * b.transpose() * &s;
    let a_cl = a - b * &k;
    if a_cl.complex_eigenvalues().iter().any(|e| e.re >= 0.0) {
        return Err(Error::Synthesis("closed loop is not Hurwitz".into()));
    }
    Ok(CareSolution { s, k })
}
