//! Small dense linear algebra: row-major matrices, Cholesky factorisation with
//! incremental extension, triangular solves and Householder least squares.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
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

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
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
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!("matvec {}x{} by {}", self.rows, self.cols, v.len())));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // Four accumulators let the compiler keep independent FMA chains in flight.
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s = s + a[i] * b[i];
    }
    s
}

/// Lower-triangular Cholesky factor stored densely (upper part zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factor a symmetric positive-definite matrix. Returns `None` on a
    /// non-positive pivot.
    pub fn factor(a: &Mat<T>) -> Option<Self> {
        let n = a.rows();
        debug_assert_eq!(n, a.cols());
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return None;
                    }
                    l.set(i, i, s.sqrt());
                } else {
                    let v = s / l.get(j, j);
                    l.set(i, j, v);
                }
            }
        }
        Some(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &Mat<T> {
        &self.l
    }

    /// Extend the factor by one row/column: `cross` holds the covariances
    /// between the new point and the existing ones, `diag` its own variance.
    /// Costs O(n^2). Returns `false` (leaving the factor untouched) when the
    /// extended matrix is not positive definite.
    pub fn extend(&mut self, cross: &[T], diag: T) -> bool {
        let n = self.dim();
        debug_assert_eq!(cross.len(), n);
        let w = self.solve_lower(cross);
        let s = diag - dot(&w, &w);
        if !(s > T::zero()) || !s.is_finite() {
            return false;
        }
        let mut l = Mat::zeros(n + 1, n + 1);
        for i in 0..n {
            l.row_mut(i)[..n].copy_from_slice(self.l.row(i));
        }
        l.row_mut(n)[..n].copy_from_slice(&w);
        l.set(n, n, s.sqrt());
        self.l = l;
        true
    }

    /// Solve `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let s = x[i] - dot(&self.l.row(i)[..i], &x[..i]);
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Solve `L^T x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let xi = x[i] / self.l.get(i, i);
            x[i] = xi;
            // column i of L^T above the diagonal is row i of L left of it
            let row = &self.l.row(i)[..i];
            for (xj, &lij) in x[..i].iter_mut().zip(row) {
                *xj = *xj - lij * xi;
            }
        }
        x
    }

    /// Solve `A x = b` with `A = L L^T`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solve `L X = B` for many right-hand sides. `b` is `n x m`, row-major.
    pub fn solve_lower_many(&self, b: &Mat<T>) -> Mat<T> {
        let n = self.dim();
        let m = b.cols();
        let mut x = b.clone();
        for i in 0..n {
            let (done, rest) = x.data.split_at_mut(i * m);
            let xi = &mut rest[..m];
            for j in 0..i {
                let lij = self.l.get(i, j);
                if lij != T::zero() {
                    let xj = &done[j * m..(j + 1) * m];
                    for (a, &b) in xi.iter_mut().zip(xj) {
                        *a = *a - lij * b;
                    }
                }
            }
            let d = self.l.get(i, i);
            for a in xi.iter_mut() {
                *a = *a / d;
            }
        }
        x
    }

    /// `log det A = 2 sum log L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| self.l.get(i, i).ln()).sum::<T>() * two
    }
}

/// Least-squares solution of `min ||A x - b||` by Householder QR.
///
/// Columns whose residual norm falls below `rank_tol` relative to the largest
/// column norm are treated as dependent and their coefficient is set to zero.
pub fn lstsq<T: Scalar>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::Shape(format!("lstsq rhs {} for {m} rows", b.len())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Work column-major for Householder sweeps.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut rhs = b.to_vec();
    let max_norm = cols
        .iter()
        .map(|c| dot(c, c).sqrt())
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc });
    let rank_tol = max_norm * T::lit(1e-12);
    let mut diag = vec![T::zero(); n];
    let mut independent = vec![true; n];
    let steps = n.min(m);
    for k in 0..steps {
        let norm = dot(&cols[k][k..], &cols[k][k..]).sqrt();
        if norm <= rank_tol {
            independent[k] = false;
            continue;
        }
        let alpha = if cols[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = cols[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = dot(&v, &v);
        diag[k] = alpha;
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for col in cols.iter_mut().skip(k + 1) {
            let f = two * dot(&v, &col[k..]) / vnorm2;
            for (c, &vi) in col[k..].iter_mut().zip(&v) {
                *c = *c - f * vi;
            }
        }
        let f = two * dot(&v, &rhs[k..]) / vnorm2;
        for (r, &vi) in rhs[k..].iter_mut().zip(&v) {
            *r = *r - f * vi;
        }
    }
    for k in steps..n {
        independent[k] = false;
    }
    let mut x = vec![T::zero(); n];
    for k in (0..steps).rev() {
        if !independent[k] {
            continue;
        }
        let mut s = rhs[k];
        for j in k + 1..n {
            if independent[j] {
                s = s - cols[j][k] * x[j];
            }
        }
        x[k] = s / diag[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Mat<f64> {
        let b = Mat::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 + if i == j { 1.0 } else { 0.0 });
        let mut a = b.matmul(&b.transpose()).unwrap();
        for i in 0..n {
            a.set(i, i, a.get(i, i) + n as f64);
        }
        a
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd(6);
        let c = Cholesky::factor(&a).unwrap();
        let r = c.lower().matmul(&c.lower().transpose()).unwrap();
        for (x, y) in r.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn extend_matches_full_factor() {
        let a = spd(7);
        let sub = Mat::from_fn(6, 6, |i, j| a.get(i, j));
        let mut c = Cholesky::factor(&sub).unwrap();
        let cross: Vec<f64> = (0..6).map(|i| a.get(6, i)).collect();
        assert!(c.extend(&cross, a.get(6, 6)));
        let full = Cholesky::factor(&a).unwrap();
        for (x, y) in c.lower().as_slice().iter().zip(full.lower().as_slice()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_many_matches_single() {
        let a = spd(5);
        let c = Cholesky::factor(&a).unwrap();
        let b = Mat::from_fn(5, 3, |i, j| (i + 2 * j) as f64 - 1.5);
        let x = c.solve_lower_many(&b);
        for j in 0..3 {
            let col: Vec<f64> = (0..5).map(|i| b.get(i, j)).collect();
            let single = c.solve_lower(&col);
            for i in 0..5 {
                assert!((single[i] - x.get(i, j)).abs() < 1e-12);
            }
        }
        let rhs = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let sol = c.solve(&rhs);
        let back = a.matvec(&sol).unwrap();
        for (u, v) in back.iter().zip(&rhs) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn non_spd_rejected() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(Cholesky::factor(&a).is_none());
    }

    #[test]
    fn lstsq_recovers_exact_coefficients() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.15).collect();
        let a = Mat::from_fn(20, 3, |i, j| xs[i].powi(j as i32));
        let b: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x + 3.0 * x * x).collect();
        let c = lstsq(&a, &b).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-10);
        assert!((c[1] + 0.5).abs() < 1e-10);
        assert!((c[2] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn lstsq_handles_dependent_columns() {
        let a = Mat::from_fn(10, 2, |i, _| i as f64);
        let b: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let c = lstsq(&a, &b).unwrap();
        assert!((c[0] + c[1] - 2.0).abs() < 1e-10);
    }
}
