//! Extreme eigenvalues of symmetric positive semidefinite matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `(λ_max, λ_min)` from a full symmetric eigendecomposition.
pub fn dense_extremes(g: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = g.nrows();
    let eig = SymmetricEigen::try_new(g.clone(), f64::EPSILON, 100 * n.max(10)).ok_or_else(|| {
        Error::Numerical(format!(
            "symmetric eigensolver did not converge (n = {n}, max |g| = {:e})",
            g.amax()
        ))
    })?;
    let vals = eig.eigenvalues;
    Ok((vals.max(), vals.min()))
}

/// `(λ_max, λ_min)` by Lanczos with full reorthogonalization. Stops when both
/// extreme Ritz pairs have residual below `tol · λ_max`, or at a Krylov
/// dimension of `n` (where the Ritz values are exact).
pub fn lanczos_extremes(g: &DMatrix<f64>, tol: f64) -> Result<(f64, f64)> {
    let n = g.nrows();
    if n == 0 {
        return Err(Error::Numerical("empty matrix".into()));
    }
    let norm_bound = g.amax() * n as f64;
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * (1.234_567 * i as f64).sin());
    v /= v.norm();
    let mut basis: Vec<DVector<f64>> = vec![v];
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let check_every = 10;
    loop {
        let j = basis.len() - 1;
        let mut w = g * &basis[j];
        let a = basis[j].dot(&w);
        alpha.push(a);
        w.axpy(-a, &basis[j], 1.0);
        if j > 0 {
            w.axpy(-beta[j - 1], &basis[j - 1], 1.0);
        }
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let b = w.norm();
        let k = alpha.len();
        let exhausted = k == n || b <= 1e-14 * norm_bound;
        if exhausted || k % check_every == 0 {
            let (theta_max, r_max, theta_min, r_min) = ritz(&alpha, &beta, b)?;
            let done = exhausted
                || (r_max <= tol * theta_max.abs() && r_min <= tol * theta_max.abs());
            if done {
                return Ok((theta_max, theta_min));
            }
        }
        beta.push(b);
        basis.push(w / b);
    }
}

// Extreme eigenpairs of the tridiagonal Lanczos matrix with their residual
// norms `β_k |s_k|`.
fn ritz(alpha: &[f64], beta: &[f64], b_next: f64) -> Result<(f64, f64, f64, f64)> {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::try_new(t, f64::EPSILON, 100 * k.max(10))
        .ok_or_else(|| Error::Numerical(format!("tridiagonal eigensolver failed at k = {k}")))?;
    let (imax, imin) = (eig.eigenvalues.imax(), eig.eigenvalues.imin());
    let r = |i: usize| b_next * eig.eigenvectors[(k - 1, i)].abs();
    Ok((eig.eigenvalues[imax], r(imax), eig.eigenvalues[imin], r(imin)))
}
