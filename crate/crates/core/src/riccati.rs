//! Continuous algebraic Riccati equation
//! `AᵀP + PA - P B R⁻¹ Bᵀ P + Q = 0`.
//!
//! The stabilizing solution is obtained from the matrix sign function of the
//! Hamiltonian (Newton iteration with determinant scaling) and then polished
//! with Newton–Kleinman steps, each of which is a Lyapunov solve, followed by a
//! few Newton steps in correction form.

use nalgebra::{Complex, DMatrix};

use crate::dynamics::LqrWeights;
use crate::error::{Error, Result};
use crate::linalg;

const SIGN_MAX_ITER: usize = 100;
const SIGN_TOL: f64 = 1e-13;
const KLEINMAN_MAX_ITER: usize = 20;
const DEFECT_MAX_ITER: usize = 4;

/// Residual of the Riccati equation at `p`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &LqrWeights,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let s = b * r_inverse(w) * b.transpose();
    a.transpose() * p + p * a - p * s * p + w.q()
}

fn r_inverse(w: &LqrWeights) -> DMatrix<f64> {
    w.r()
        .clone()
        .try_inverse()
        .expect("validated R is invertible")
}

/// Stabilizing solution `P` of the continuous algebraic Riccati equation.
///
/// Requires `(A, B)` stabilizable and `(A, Q^½)` detectable. A pair with an
/// uncontrollable mode in the closed right half plane is reported as
/// [`Error::NotStabilizable`].
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &LqrWeights) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || n == 0 {
        return Err(Error::Dimension("A must be square and non-empty".into()));
    }
    if b.nrows() != n {
        return Err(Error::Dimension(format!("B must have {n} rows, got {}", b.nrows())));
    }
    if w.q().nrows() != n || w.r().nrows() != b.ncols() {
        return Err(Error::Dimension(format!(
            "weights must be Q {n}x{n} and R {m}x{m}",
            m = b.ncols()
        )));
    }
    if !linalg::all_finite(a) || !linalg::all_finite(b) {
        return Err(Error::InvalidParameter("A and B must be finite".into()));
    }
    check_stabilizable(a, b)?;

    let p0 = sign_function_solution(a, b, w)?;
    let p = kleinman_polish(a, b, w, p0)?;

    let abscissa = linalg::spectral_abscissa(&(a - b * r_inverse(w) * b.transpose() * &p));
    if abscissa.is_nan() || abscissa >= 0.0 {
        return Err(Error::Riccati(format!(
            "solution is not stabilizing (closed-loop abscissa {abscissa:e}); (A, Q) may not be detectable"
        )));
    }
    Ok(p)
}

/// PBH test on every eigenvalue with non-negative real part.
fn check_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let scale = 1.0 + a.amax().max(b.amax());
    for lambda in linalg::eigenvalues(a) {
        if lambda.re < -1e-9 * scale {
            continue;
        }
        let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                pbh[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            pbh[(i, i)] -= lambda;
            for j in 0..b.ncols() {
                pbh[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        // Rank of the n x (n+m) block via the Gram matrix M·Mᴴ.
        let gram = &pbh * pbh.adjoint();
        let sv = gram.singular_values();
        let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smallest.sqrt() <= 1e-8 * scale {
            return Err(Error::NotStabilizable(format!("{:.6}{:+.6}i", lambda.re, lambda.im)));
        }
    }
    Ok(())
}

fn hamiltonian(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &LqrWeights) -> DMatrix<f64> {
    let n = a.nrows();
    let s = b * r_inverse(w) * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-w.q()));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    h
}

fn sign_function_solution(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &LqrWeights,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let dim = 2 * n;
    let mut z = hamiltonian(a, b, w);
    let mut converged = false;
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or_else(|| {
            Error::Riccati("Hamiltonian has eigenvalues on the imaginary axis".into())
        })?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / dim as f64)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        if !linalg::all_finite(&next) {
            return Err(Error::Riccati("sign iteration overflowed".into()));
        }
        let delta = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if delta <= SIGN_TOL * size {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Riccati(
            "sign iteration did not converge; Hamiltonian may have imaginary-axis eigenvalues"
                .into(),
        ));
    }

    // Stable invariant subspace [I; P] lies in the kernel of sign(H) + I.
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(dim, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(dim, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Riccati(e.to_string()))?;
    if !linalg::all_finite(&p) {
        return Err(Error::Riccati("invariant-subspace solve produced non-finite P".into()));
    }
    Ok(linalg::symmetrize(&p))
}

/// Newton–Kleinman refinement; keeps the iterate with the smallest residual.
fn kleinman_polish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &LqrWeights,
    p0: DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let r_inv = r_inverse(w);
    let mut best_res = care_residual(a, b, w, &p0).norm();
    let mut best = p0;
    for _ in 0..KLEINMAN_MAX_ITER {
        let k = &r_inv * b.transpose() * &best;
        let closed = a - b * &k;
        let abscissa = linalg::spectral_abscissa(&closed);
        if abscissa.is_nan() || abscissa >= 0.0 {
            break;
        }
        let c = w.q() + k.transpose() * w.r() * &k;
        let next = match linalg::solve_lyapunov(&closed, &c) {
            Ok(x) => linalg::symmetrize(&x),
            Err(_) => break,
        };
        let res = care_residual(a, b, w, &next).norm();
        if res < best_res {
            let improvement = best_res - res;
            best = next;
            best_res = res;
            if improvement <= 1e-3 * best_res || best_res == 0.0 {
                break;
            }
        } else {
            break;
        }
    }
    Ok(defect_correction(a, b, w, best, best_res))
}

/// Newton steps in correction form: solve
/// `(A - S P)ᵀ X + X (A - S P) = -Res(P)` and update `P += X`. The small
/// correction is computed to high relative accuracy, so this reaches the
/// rounding floor of the residual itself.
fn defect_correction(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &LqrWeights,
    mut p: DMatrix<f64>,
    mut res_norm: f64,
) -> DMatrix<f64> {
    let s = b * r_inverse(w) * b.transpose();
    for _ in 0..DEFECT_MAX_ITER {
        let res = care_residual(a, b, w, &p);
        let closed = a - &s * &p;
        let Ok(x) = linalg::solve_lyapunov(&closed, &res) else {
            break;
        };
        let next = linalg::symmetrize(&(&p + x));
        let next_norm = care_residual(a, b, w, &next).norm();
        if next_norm.is_nan() || next_norm >= res_norm {
            break;
        }
        p = next;
        res_norm = next_norm;
    }
    p
}
