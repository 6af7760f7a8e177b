//! Small dense row-major matrices.
//!
//! Every matrix handled by this crate is at most a dozen rows, so the routines
//! favour clarity over blocking or SIMD. Arithmetic helpers (`matmul`, `add`,
//! ...) panic on shape mismatch; the public operations built on them check
//! shapes first and return [`CoreError::DimensionMismatch`].

use std::fmt;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CoreError, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major nested rows. All rows must share a length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::Malformed("matrix has no rows".into()));
        }
        let cols = rows[0].as_ref().len();
        if cols == 0 {
            return Err(CoreError::Malformed("matrix has no columns".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(CoreError::Malformed(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column vector `n x 1`.
    pub fn column(v: &[T]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · v` without materializing the transpose.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// `vᵀ · self · v`.
    pub fn quad_form(&self, v: &[T]) -> T {
        assert!(
            self.is_square() && self.rows == v.len(),
            "quad_form shape mismatch"
        );
        (0..self.rows)
            .map(|i| v[i] * self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum::<T>())
            .sum()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        self.zip_map(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        self.zip_map(rhs, |a, b| a - b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|a| a * k)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    fn zip_map(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Largest absolute entry, `‖·‖_max`.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hstack(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "hstack row mismatch");
        Self::from_fn(self.rows, self.cols + rhs.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                rhs[(i, j - self.cols)]
            }
        })
    }

    /// Sub-block of `rows x cols` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| U::lit(a.as_f64())).collect(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

impl<T: Scalar + Serialize> Serialize for Matrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Matrix<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A square matrix that is exactly symmetric.
///
/// Construction symmetrizes with `(M + Mᵀ)/2`, so `m[(i, j)] == m[(j, i)]`
/// holds bit for bit.
#[derive(Clone, PartialEq)]
pub struct SymmetricMatrix<T>(Matrix<T>);

impl<T: Scalar> SymmetricMatrix<T> {
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(CoreError::Malformed(format!(
                "symmetric matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let half = T::lit(0.5);
        let mut out = m.clone();
        for i in 0..m.rows() {
            for j in (i + 1)..m.cols() {
                let v = (m[(i, j)] + m[(j, i)]) * half;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(Self(out))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[T]) -> Self {
        Self(Matrix::from_diag(diag))
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn quad_form(&self, v: &[T]) -> T {
        self.0.quad_form(v)
    }

    pub fn scale(&self, k: T) -> Self {
        Self(self.0.scale(k))
    }

    /// Congruence `Mᵀ · self · M`, symmetrized.
    pub fn congruence(&self, m: &Matrix<T>) -> Self {
        let prod = m.transpose().matmul(&self.0).matmul(m);
        Self::new(prod).expect("congruence of a square matrix is square")
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self(self.0.sub(&rhs.0))
    }
}

impl<T> std::ops::Index<(usize, usize)> for SymmetricMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

impl<T: fmt::Debug> fmt::Debug for SymmetricMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<T: Scalar + Serialize> Serialize for SymmetricMatrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for SymmetricMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let m = Matrix::<T>::deserialize(deserializer)?;
        SymmetricMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// LU factorization with scaled partial pivoting, row-permuted in place.
struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

fn lu_factor<T: Scalar>(m: &Matrix<T>) -> Result<Lu<T>> {
    let n = m.rows();
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    // Row scales of the original matrix; a pivot is rejected below 1e-12 of its row scale.
    let mut scale: Vec<T> = (0..n)
        .map(|i| m.row(i).iter().fold(T::zero(), |a, &b| a.max(b.abs())))
        .collect();
    let thresh = T::tol(1e-12);
    for k in 0..n {
        let mut best = k;
        let mut best_ratio = -T::one();
        for i in k..n {
            let s = scale[i];
            let ratio = if s > T::zero() {
                lu[(i, k)].abs() / s
            } else {
                T::zero()
            };
            if ratio > best_ratio {
                best_ratio = ratio;
                best = i;
            }
        }
        if best_ratio <= thresh {
            return Err(CoreError::Singular {
                column: k,
                pivot: lu[(best, k)].as_f64(),
            });
        }
        if best != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(best, j)];
                lu[(best, j)] = tmp;
            }
            perm.swap(k, best);
            scale.swap(k, best);
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            if f == T::zero() {
                continue;
            }
            for j in (k + 1)..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= f * u;
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl<T: Scalar> Lu<T> {
    #[allow(clippy::needless_range_loop)]
    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        x
    }
}

/// Solves `m · x = b`.
pub fn solve_linear<T: Scalar>(m: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    if !m.is_square() {
        return Err(CoreError::Malformed("solve_linear needs a square matrix".into()));
    }
    check_dim("solve_linear rhs", m.rows(), b.len())?;
    Ok(lu_factor(m)?.solve(b))
}

/// Solves `m · X = rhs` for a matrix right-hand side.
pub fn solve_matrix<T: Scalar>(m: &Matrix<T>, rhs: &Matrix<T>) -> Result<Matrix<T>> {
    if !m.is_square() {
        return Err(CoreError::Malformed("solve_matrix needs a square matrix".into()));
    }
    check_dim("solve_matrix rhs rows", m.rows(), rhs.rows())?;
    let lu = lu_factor(m)?;
    let mut out = Matrix::zeros(rhs.rows(), rhs.cols());
    for j in 0..rhs.cols() {
        let x = lu.solve(&rhs.col(j));
        for (i, v) in x.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

pub fn inverse<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    solve_matrix(m, &Matrix::identity(m.rows()))
}

/// Spectral radius of a general square matrix.
///
/// Uses Gelfand's formula `ρ(M) = lim ‖M^k‖^(1/k)` along `k = 2^j`, renormalizing
/// after each squaring and tracking the scale in log space. Sixty squarings put
/// `k` far beyond the point where the polynomial prefactor of a Jordan block
/// matters.
pub fn spectral_radius<T: Scalar>(m: &Matrix<T>) -> T {
    assert!(m.is_square(), "spectral_radius needs a square matrix");
    let mut log_scale = 0.0f64;
    let mut k = 1.0f64;
    let norm0 = m.max_abs();
    if norm0 == T::zero() {
        return T::zero();
    }
    let mut cur = m.scale(T::one() / norm0);
    log_scale += norm0.as_f64().ln();
    let mut estimate = norm0.as_f64();
    for _ in 0..60 {
        cur = cur.matmul(&cur);
        k *= 2.0;
        log_scale *= 2.0;
        let nrm = cur.max_abs();
        if nrm == T::zero() {
            return T::zero();
        }
        log_scale += nrm.as_f64().ln();
        cur = cur.scale(T::one() / nrm);
        estimate = (log_scale / k).exp();
    }
    T::lit(estimate)
}

/// Matrix exponential by scaling and squaring of the Taylor series.
///
/// The argument is scaled by `2^-s` until its max-norm is at most 1/2, the
/// series is summed until a term falls below `1e-16` relative to the sum, and
/// the result is squared `s` times.
pub fn expm<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    assert!(m.is_square(), "expm needs a square matrix");
    let n = m.rows();
    let norm = m.max_abs().as_f64() * n as f64;
    let mut squarings = 0u32;
    let mut s = 1.0;
    while norm / s > 0.5 {
        s *= 2.0;
        squarings += 1;
    }
    let a = m.scale(T::lit(1.0 / s));
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..60 {
        term = term.matmul(&a).scale(T::one() / T::lit(k as f64));
        sum = sum.add(&term);
        if term.max_abs() <= T::epsilon() * sum.max_abs() * T::lit(0.5) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    sum
}
