//! Small dense linear algebra: LU solves and Cholesky factorization.
//!
//! Sized for the kernel duals in this crate (systems up to a few thousand
//! unknowns); plain sequential loops keep results bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;
use crate::tensor::Tensor;

/// Solves `A x = b` by LU factorization with partial pivoting.
///
/// `A` is a square `n×n` matrix (consumed), `b` has length `n`. Fails with
/// [`CoreError::Singular`] when a pivot falls below `1e-12` times the
/// largest absolute entry of `A`.
pub fn lu_solve(mut a: Tensor, b: &[f64]) -> Result<Vec<f64>, CoreError> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "lu_solve: matrix must be square");
    assert_eq!(b.len(), n, "lu_solve: rhs length mismatch");
    let scale = a
        .data()
        .iter()
        .fold(0.0f64, |acc, &v| math::fmax(acc, math::abs(v)))
        .max(1.0);
    let tol = 1e-12 * scale;

    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // Pivot: largest |a[i][k]| for i >= k.
        let mut p = k;
        let mut best = math::abs(a.get(k, k));
        for i in k + 1..n {
            let v = math::abs(a.get(i, k));
            if v > best {
                best = v;
                p = i;
            }
        }
        if best < tol {
            return Err(CoreError::Singular { what: "lu_solve" });
        }
        if p != k {
            for j in 0..n {
                let (x, y) = (a.get(k, j), a.get(p, j));
                a.set(k, j, y);
                a.set(p, j, x);
            }
            perm.swap(k, p);
        }
        let akk = a.get(k, k);
        for i in k + 1..n {
            let l = a.get(i, k) / akk;
            a.set(i, k, l);
            if l != 0.0 {
                for j in k + 1..n {
                    let v = a.get(i, j) - l * a.get(k, j);
                    a.set(i, j, v);
                }
            }
        }
    }

    // Forward substitution on permuted rhs, then back substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[perm[i]];
        for j in 0..i {
            s -= a.get(i, j) * y[j];
        }
        y[i] = s;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s -= a.get(i, j) * x[j];
        }
        x[i] = s / a.get(i, i);
    }
    Ok(x)
}

/// Cholesky factorization `A = L Lᵀ` of a symmetric matrix; returns the
/// lower factor. Fails with [`CoreError::Singular`] if a diagonal pivot is
/// not strictly positive — the standard positive-definiteness check.
pub fn cholesky(a: &Tensor) -> Result<Tensor, CoreError> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "cholesky: matrix must be square");
    let mut l = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(CoreError::Singular { what: "cholesky" });
                }
                l.set(i, j, math::sqrt(s));
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}
