//! Small dense linear algebra over a generic floating scalar.
//!
//! Everything here operates on matrices of size at most a few dozen, so the
//! implementations favour determinism and simplicity: LU with partial
//! pivoting, cyclic Jacobi for symmetric eigenproblems, Householder QR for
//! least squares. No randomization anywhere.

use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diag(entries: &[T]) -> Self {
        let mut m = Mat::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn set_column(&mut self, j: usize, col: &[T]) {
        assert_eq!(col.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = col[i];
        }
    }

    pub fn transpose(&self) -> Mat<T> {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..self.cols {
                    s = s + self[(i, j)] * v[j];
                }
                s
            })
            .collect()
    }

    pub fn add(&self, other: &Mat<T>) -> Mat<T> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &Mat<T>) -> Mat<T> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn scale(&self, s: T) -> Mat<T> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s)
    }

    pub fn frobenius_norm(&self) -> T {
        let mut s = T::zero();
        for &x in &self.data {
            s = s + x * x;
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> T {
        let mut s = T::zero();
        for &x in &self.data {
            if x.abs() > s {
                s = x.abs();
            }
        }
        s
    }

    /// LU decomposition with partial pivoting; returns (lu, perm, sign) or
    /// None when the matrix is exactly singular.
    fn lu(&self) -> Option<(Mat<T>, Vec<usize>, T)> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                if lu[(i, k)].abs() > best {
                    best = lu[(i, k)].abs();
                    p = i;
                }
            }
            if best == T::zero() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let s = lu[(k, j)] * f;
                    lu[(i, j)] = lu[(i, j)] - s;
                }
            }
        }
        Some((lu, perm, sign))
    }

    pub fn det(&self) -> T {
        match self.lu() {
            None => T::zero(),
            Some((lu, _, sign)) => {
                let mut d = sign;
                for i in 0..self.rows {
                    d = d * lu[(i, i)];
                }
                d
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.rows;
        let (lu, perm, _) = self
            .lu()
            .ok_or_else(|| Error::FrameSolve { point: String::new(), cond: "inf".into() })?;
        let mut x: Vec<T> = perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                let s = lu[(i, j)] * x[j];
                x[i] = x[i] - s;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let s = lu[(i, j)] * x[j];
                x[i] = x[i] - s;
            }
            x[i] = x[i] / lu[(i, i)];
        }
        Ok(x)
    }

    pub fn solve_mat(&self, b: &Mat<T>) -> Result<Mat<T>> {
        let mut out = Mat::zeros(self.rows, b.cols);
        for j in 0..b.cols {
            let col = self.solve(&b.column(j))?;
            out.set_column(j, &col);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Mat<T>> {
        self.solve_mat(&Mat::identity(self.rows))
    }

    /// Symmetric eigendecomposition by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and the matching eigenvectors
    /// as columns. The input is symmetrized first.
    pub fn sym_eigen(&self) -> (Vec<T>, Mat<T>) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let half = T::from_f64(0.5).unwrap();
        let mut a = Mat::from_fn(n, n, |i, j| (self[(i, j)] + self[(j, i)]) * half);
        let mut v = Mat::identity(n);
        let eps = T::epsilon() * T::from_f64(16.0).unwrap();
        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..n {
                for j in i + 1..n {
                    off = off + a[(i, j)] * a[(i, j)];
                }
            }
            let scale = a.frobenius_norm();
            if off.sqrt() <= eps * (scale + T::one()) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() <= eps * (scale + T::one()) {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::from_f64(2.0).unwrap() * a[(p, q)]);
                    let t = {
                        let s = if theta >= T::zero() { T::one() } else { -T::one() };
                        s / (theta.abs() + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
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
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal)
        });
        let eigvals: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
        let mut eigvecs = Mat::zeros(n, n);
        for (newj, &oldj) in order.iter().enumerate() {
            let mut col = v.column(oldj);
            // Deterministic sign: largest-magnitude entry positive.
            let mut lead = T::zero();
            for &x in &col {
                if x.abs() > lead.abs() {
                    lead = x;
                }
            }
            if lead < T::zero() {
                for x in &mut col {
                    *x = -*x;
                }
            }
            eigvecs.set_column(newj, &col);
        }
        (eigvals, eigvecs)
    }

    /// Symmetric square root of a positive definite matrix.
    pub fn sym_sqrt(&self) -> Result<Mat<T>> {
        let (vals, vecs) = self.sym_eigen();
        for &l in &vals {
            if l <= T::zero() {
                return Err(Error::Domain(format!(
                    "matrix is not positive definite (eigenvalue {l})"
                )));
            }
        }
        let d = Mat::diag(&vals.iter().map(|l| l.sqrt()).collect::<Vec<_>>());
        Ok(vecs.matmul(&d).matmul(&vecs.transpose()))
    }

    /// Singular values in descending order, via the eigenvalues of A^T A.
    pub fn singular_values(&self) -> Vec<T> {
        let ata = self.transpose().matmul(self);
        let (vals, _) = ata.sym_eigen();
        let mut sv: Vec<T> = vals
            .iter()
            .map(|&l| if l > T::zero() { l.sqrt() } else { T::zero() })
            .collect();
        sv.reverse();
        sv
    }

    pub fn condition_number(&self) -> T {
        let sv = self.singular_values();
        let smax = sv[0];
        let smin = sv[sv.len() - 1];
        if smin == T::zero() {
            T::infinity()
        } else {
            smax / smin
        }
    }

    /// Least-squares solve of `self * x = b` (tall systems) via Householder QR.
    /// Returns the coefficient matrix X of shape (cols, b.cols).
    pub fn lstsq(&self, b: &Mat<T>) -> Result<Mat<T>> {
        let m = self.rows;
        let n = self.cols;
        assert!(m >= n);
        let mut r = self.clone();
        let mut qtb = b.clone();
        for k in 0..n {
            let mut norm = T::zero();
            for i in k..m {
                norm = norm + r[(i, k)] * r[(i, k)];
            }
            let norm = norm.sqrt();
            if norm == T::zero() {
                return Err(Error::Rank(format!("column {k} of design matrix is zero")));
            }
            let alpha = if r[(k, k)] >= T::zero() { -norm } else { norm };
            let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
            v[0] = v[0] - alpha;
            let mut vnorm2 = T::zero();
            for &x in &v {
                vnorm2 = vnorm2 + x * x;
            }
            if vnorm2 == T::zero() {
                continue;
            }
            let two = T::from_f64(2.0).unwrap();
            for j in k..n {
                let mut dot = T::zero();
                for i in k..m {
                    dot = dot + v[i - k] * r[(i, j)];
                }
                let f = two * dot / vnorm2;
                for i in k..m {
                    let s = f * v[i - k];
                    r[(i, j)] = r[(i, j)] - s;
                }
            }
            for j in 0..qtb.cols {
                let mut dot = T::zero();
                for i in k..m {
                    dot = dot + v[i - k] * qtb[(i, j)];
                }
                let f = two * dot / vnorm2;
                for i in k..m {
                    let s = f * v[i - k];
                    qtb[(i, j)] = qtb[(i, j)] - s;
                }
            }
        }
        // Back substitution on the upper-triangular part.
        let rmax = r.max_abs();
        let mut x = Mat::zeros(n, b.cols);
        for j in 0..b.cols {
            for i in (0..n).rev() {
                let mut s = qtb[(i, j)];
                for l in i + 1..n {
                    s = s - r[(i, l)] * x[(l, j)];
                }
                if r[(i, i)].abs() <= rmax * T::from_f64(1e-13).unwrap() {
                    return Err(Error::Rank(format!("design matrix rank-deficient at row {i}")));
                }
                x[(i, j)] = s / r[(i, i)];
            }
        }
        Ok(x)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Rank-3 array of shape (n0, n1, n2), used for connection coefficients.
/// Index convention: `t[(k, i, j)]` is the coefficient of the k-th basis
/// vector in `nabla_{d_i} d_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    n0: usize,
    n1: usize,
    n2: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(n0: usize, n1: usize, n2: usize) -> Self {
        Tensor3 {
            n0,
            n1,
            n2,
            data: vec![T::zero(); n0 * n1 * n2],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n0, self.n1, self.n2)
    }

    pub fn sub(&self, other: &Tensor3<T>) -> Tensor3<T> {
        assert_eq!(self.dims(), other.dims());
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a = *a - *b;
        }
        out
    }

    pub fn max_abs(&self) -> T {
        let mut s = T::zero();
        for &x in &self.data {
            if x.abs() > s {
                s = x.abs();
            }
        }
        s
    }
}

impl<T> std::ops::Index<(usize, usize, usize)> for Tensor3<T> {
    type Output = T;
    fn index(&self, (k, i, j): (usize, usize, usize)) -> &T {
        &self.data[(k * self.n1 + i) * self.n2 + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize, usize)> for Tensor3<T> {
    fn index_mut(&mut self, (k, i, j): (usize, usize, usize)) -> &mut T {
        &mut self.data[(k * self.n1 + i) * self.n2 + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s = s + *x * *y;
    }
    s
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}
