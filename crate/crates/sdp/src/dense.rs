//! Small dense linear algebra, generic over [`Real`].
//!
//! Only what the interior-point method needs: products, Cholesky, triangular
//! inversion, a one-sided Jacobi SVD for the Nesterov-Todd scaling point and
//! a cyclic Jacobi eigenvalue routine for step lengths. Matrices are row-major.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
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

    pub fn scaled_identity(n: usize, v: T) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = v;
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

    pub fn from_f64(m: &Mat<f64>) -> Self {
        Self {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&v| T::from_f64(v)).collect(),
        }
    }

    pub fn to_f64(&self) -> Mat<f64> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.to_f64()).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = i * rhs.cols;
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let rrow = k * rhs.cols;
                for j in 0..rhs.cols {
                    let v = a * rhs.data[rrow + j];
                    out.data[orow + j] += v;
                }
            }
        }
        out
    }

    /// `self * rhs^T`.
    pub fn matmul_t(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_t shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(a, rhs.row(j));
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    /// `self += s * rhs`.
    pub fn axpy(&mut self, s: T, rhs: &Self) {
        debug_assert_eq!(self.data.len(), rhs.data.len());
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        let half = T::from_f64(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Frobenius inner product.
    pub fn inner(&self, rhs: &Self) -> T {
        dot(&self.data, &rhs.data)
    }

    pub fn frobenius_norm(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn trace(&self) -> T {
        let mut t = T::zero();
        for i in 0..self.rows.min(self.cols) {
            t += self[(i, i)];
        }
        t
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Lower Cholesky factor `L` with `self = L L^T`, or `None` if a pivot is
    /// not strictly positive.
    pub fn cholesky(&self) -> Option<Self> {
        let n = self.rows;
        assert_eq!(n, self.cols, "cholesky of non-square matrix");
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            {
                let lj = &l.data[j * n..j * n + j];
                for &v in lj {
                    d -= v * v;
                }
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l.data[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l.data[i * n + k] * l.data[j * n + k];
                }
                l.data[i * n + j] = s / d;
            }
        }
        Some(l)
    }

    /// Inverse of a lower-triangular matrix.
    pub fn lower_inverse(&self) -> Self {
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for j in 0..n {
            inv[(j, j)] = T::one() / self[(j, j)];
            for i in (j + 1)..n {
                let mut s = T::zero();
                for k in j..i {
                    s += self[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / self[(i, i)];
            }
        }
        inv
    }

    /// Solves `L L^T x = b` given the lower factor `self`.
    pub fn cholesky_solve(&self, b: &[T]) -> Vec<T> {
        let n = self.rows;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            let row = &self.data[i * n..i * n + i];
            for (k, &l) in row.iter().enumerate() {
                s -= l * x[k];
            }
            x[i] = s / self.data[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.data[k * n + i] * x[k];
            }
            x[i] = s / self.data[i * n + i];
        }
        x
    }

    /// One-sided Jacobi SVD of a square matrix: returns `(sigma, V)` with
    /// `self = U diag(sigma) V^T`. Singular values come out with high
    /// relative accuracy, which the scaling point depends on near optimality.
    pub fn jacobi_svd(&self) -> (Vec<T>, Self) {
        let n = self.cols;
        // work on columns stored as rows of the transpose
        let mut a = self.transpose();
        let mut v = Self::identity(n);
        let tol = T::from_f64(T::EPSILON * (n as f64).sqrt());
        for _sweep in 0..60 {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let (ap, aq) = (a.row(p), a.row(q));
                    let alpha = dot(ap, ap);
                    let beta = dot(aq, aq);
                    let gamma = dot(ap, aq);
                    if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (T::from_f64(2.0) * gamma);
                    let t = if zeta.abs() > T::from_f64(1e100) {
                        // zeta^2 would overflow; double-double turns that into NaN
                        T::from_f64(0.5) / zeta
                    } else {
                        let mag = T::one() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                        if zeta >= T::zero() {
                            mag
                        } else {
                            -mag
                        }
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    rotate_rows(&mut a, p, q, c, s);
                    rotate_rows(&mut v, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }
        let sigma = (0..n).map(|i| dot(a.row(i), a.row(i)).sqrt()).collect();
        // rows of `v` are the right singular vectors; return them as columns
        (sigma, v.transpose())
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        let n = self.rows;
        let mut a = self.clone();
        let eps = T::from_f64(T::EPSILON);
        for _sweep in 0..60 {
            let mut off = T::zero();
            let mut diag = T::zero();
            for i in 0..n {
                diag += a[(i, i)] * a[(i, i)];
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off <= eps * eps * diag || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::from_f64(2.0) * apq);
                    let t = if theta.abs() > T::from_f64(1e100) {
                        // theta^2 would overflow; double-double turns that into NaN
                        T::from_f64(0.5) / theta
                    } else {
                        let mag = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                        if theta >= T::zero() {
                            mag
                        } else {
                            -mag
                        }
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).collect()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.symmetric_eigenvalues()
            .into_iter()
            .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.min(v))))
            .unwrap_or_else(T::zero)
    }
}

fn rotate_rows<T: Real>(m: &mut Mat<T>, p: usize, q: usize, c: T, s: T) {
    let cols = m.cols;
    for k in 0..cols {
        let xp = m.data[p * cols + k];
        let xq = m.data[q * cols + k];
        m.data[p * cols + k] = c * xp - s * xq;
        m.data[q * cols + k] = s * xp + c * xq;
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::DoubleDouble;

    fn spd(n: usize) -> Mat<f64> {
        let b = Mat::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 1.0 } else { 0.0 });
        let mut a = b.matmul_t(&b);
        for i in 0..n {
            a[(i, i)] += 0.5;
        }
        a
    }

    #[test]
    fn cholesky_reconstructs_and_solves() {
        let a = spd(6);
        let l = a.cholesky().unwrap();
        let back = l.matmul_t(&l);
        assert!(back.sub(&a).max_abs() < 1e-12);
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let x = l.cholesky_solve(&b);
        for i in 0..6 {
            let r: f64 = (0..6).map(|j| a[(i, j)] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-10);
        }
        let li = l.lower_inverse();
        assert!(li.matmul(&l).sub(&Mat::identity(6)).max_abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = Mat::<f64>::identity(3);
        a[(2, 2)] = -1e-3;
        assert!(a.cholesky().is_none());
    }

    #[test]
    fn jacobi_svd_matches_gram_eigenvalues() {
        let a = Mat::from_fn(5, 5, |i, j| (i as f64 + 1.0) * 0.3 - (j as f64) * 0.7 + if i == j { 2.0 } else { 0.0 });
        let (sigma, v) = a.jacobi_svd();
        let gram = a.transpose().matmul(&a);
        let mut ev = gram.symmetric_eigenvalues();
        let mut s2: Vec<f64> = sigma.iter().map(|s| s * s).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        s2.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in ev.iter().zip(&s2) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
        assert!(v.transpose().matmul(&v).sub(&Mat::identity(5)).max_abs() < 1e-12);
        // A V has orthogonal columns with norms sigma
        let av = a.matmul(&v);
        let g = av.transpose().matmul(&av);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { sigma[i] * sigma[i] } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        let mut a = Mat::<f64>::zeros(3, 3);
        a[(0, 0)] = 2.0;
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 1.0;
        a[(1, 1)] = 2.0;
        a[(2, 2)] = -4.0;
        let mut ev = a.symmetric_eigenvalues();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((ev[0] + 4.0).abs() < 1e-14);
        assert!((ev[1] - 1.0).abs() < 1e-14);
        assert!((ev[2] - 3.0).abs() < 1e-14);
        assert_eq!(a.min_eigenvalue(), ev[0]);
    }

    #[test]
    fn tiny_off_diagonal_keeps_eigenvalues_finite() {
        let m = Mat::from_f64(&Mat::from_fn(2, 2, |i, j| if i == j { 1.0 + i as f64 } else { 1e-200 }));
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().map(|v: &DoubleDouble| v.to_f64()).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![1.0, 2.0]);
        let (sigma, _) = m.jacobi_svd();
        assert!(sigma.iter().all(|s| s.to_f64().is_finite()));
    }

    #[test]
    fn double_double_cholesky_is_tighter() {
        let a = Mat::<DoubleDouble>::from_f64(&spd(5));
        let l = a.cholesky().unwrap();
        let err = l.matmul_t(&l).sub(&a).max_abs().to_f64();
        assert!(err < 1e-28, "{err}");
    }
}
