//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::error::{CoreError, Result};
use crate::matrix::{Matrix, SymmetricMatrix};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// `M = Q · diag(eigenvalues) · Qᵀ` with eigenvalues ascending and column `i`
/// of `q` paired with `eigenvalues[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition<T> {
    pub eigenvalues: Vec<T>,
    pub q: Matrix<T>,
}

impl<T: Scalar> EigenDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `Q · diag(λ) · Qᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| self.q[(i, k)] * self.eigenvalues[k] * self.q[(j, k)])
                .sum()
        })
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps stop once the largest off-diagonal entry is at most `1e-12 · ‖M‖_max`.
/// Sweeping then continues while any off-diagonal entry is still large
/// relative to its own diagonal pair, which keeps the small eigenvalues of
/// strongly graded matrices accurate to working precision. Eigenvectors are
/// signed so their largest-magnitude component is positive.
pub fn eigendecompose<T: Scalar>(m: &SymmetricMatrix<T>) -> Result<EigenDecomposition<T>> {
    let n = m.dim();
    let mut a = m.matrix().clone();
    let mut v = Matrix::<T>::identity(n);
    let norm = a.max_abs();
    if !norm.is_finite() {
        return Err(CoreError::NonFinite("eigendecompose input"));
    }
    let abs_tol = T::tol(1e-12) * norm;
    let eps = T::epsilon();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        let mut graded = true;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)].abs();
                off = off.max(apq);
                if apq > eps * (a[(p, p)] * a[(q, q)]).abs().sqrt() {
                    graded = false;
                }
            }
        }
        if off <= abs_tol {
            converged = true;
            if graded || off == T::zero() {
                break;
            }
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                rotated = true;
                rotate(&mut a, &mut v, p, q);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoreError::EigenNoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut q = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.col(src);
        let mut lead = 0;
        for (k, c) in col.iter().enumerate() {
            if c.abs() > col[lead].abs() {
                lead = k;
            }
        }
        let sign = if col[lead] < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        for (i, c) in col.into_iter().enumerate() {
            q[(i, dst)] = sign * c;
        }
    }
    Ok(EigenDecomposition { eigenvalues, q })
}

/// Applies the rotation that annihilates `a[(p, q)]`, updating `a ← JᵀAJ`, `v ← VJ`.
fn rotate<T: Scalar>(a: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let n = a.rows();
    let apq = a[(p, q)];
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (T::lit(2.0) * apq);
    let t = if theta.is_infinite() {
        T::zero()
    } else {
        let sign = if theta >= T::zero() { T::one() } else { -T::one() };
        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = T::zero();
    a[(q, p)] = T::zero();
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// True iff every eigenvalue is strictly positive. No slack is applied.
pub fn is_positive_definite<T: Scalar>(m: &SymmetricMatrix<T>) -> bool {
    match eigendecompose(m) {
        Ok(d) => d.min_eigenvalue() > T::zero(),
        Err(_) => false,
    }
}
