//! Small dense linear algebra: column-major matrices, Householder QR,
//! one-sided Jacobi SVD and LU solvers.
//!
//! Everything here works on the "thin" side of the low-rank factorizations
//! (factor matrices with a few hundred columns at most), so the algorithms
//! favour accuracy over blocking.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, axpy, dot, sqrt};
use crate::{Error, Result};

/// Dense column-major matrix.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_col_major: bad length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_columns(rows: usize, columns: &[&[f64]]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "Mat::from_columns: ragged column");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Mat {
        Mat {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    pub fn push_col(&mut self, c: &[f64]) {
        assert_eq!(c.len(), self.rows, "Mat::push_col: wrong length");
        self.data.extend_from_slice(c);
        self.cols += 1;
    }

    /// Horizontal concatenation `[a | b | ...]`.
    pub fn hcat(parts: &[&Mat]) -> Mat {
        let rows = parts.first().map_or(0, |m| m.rows);
        let mut data = Vec::with_capacity(rows * parts.iter().map(|m| m.cols).sum::<usize>());
        let mut cols = 0;
        for m in parts {
            assert_eq!(m.rows, rows, "Mat::hcat: row mismatch");
            data.extend_from_slice(&m.data);
            cols += m.cols;
        }
        Mat { rows, cols, data }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Mat {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    pub fn fro_norm(&self) -> f64 {
        sqrt(dot(&self.data, &self.data))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(abs(*v)))
    }

    /// `self - other`, same shape.
    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `selfᵀ · other`
    pub fn t_mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "Mat::t_mul: inner dimension");
        Mat::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j)))
    }

    /// `self · other`
    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "Mat::mul: inner dimension");
        let mut out = Mat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = out.col_mut(j);
            for (k, &w) in oc.iter().enumerate() {
                if w != 0.0 {
                    axpy(w, self.col(k), dst);
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    pub fn mul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "Mat::mul_t: inner dimension");
        let mut out = Mat::zeros(self.rows, other.rows);
        for k in 0..self.cols {
            let a = self.col(k);
            let b = other.col(k);
            for (j, &w) in b.iter().enumerate() {
                if w != 0.0 {
                    axpy(w, a, out.col_mut(j));
                }
            }
        }
        out
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "Mat::mul_vec: inner dimension");
        let mut out = vec![0.0; self.rows];
        for (k, &w) in x.iter().enumerate() {
            if w != 0.0 {
                axpy(w, self.col(k), &mut out);
            }
        }
        out
    }

    /// `selfᵀ · x`
    pub fn t_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "Mat::t_mul_vec: inner dimension");
        (0..self.cols).map(|j| dot(self.col(j), x)).collect()
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// Thin Householder QR: `a = q r` with `q` of size `m × k` (orthonormal
/// columns) and `r` of size `k × n`, `k = min(m, n)`.
pub fn qr(a: &Mat) -> (Mat, Mat) {
    let (m, n) = (a.rows, a.cols);
    let k = m.min(n);
    let mut w = a.clone();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k);

    for j in 0..k {
        let x = &w.col(j)[j..];
        let xnorm = sqrt(dot(x, x));
        if xnorm == 0.0 {
            reflectors.push((Vec::new(), 0.0));
            continue;
        }
        let alpha = if x[0] > 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        let tau = if vnorm2 == 0.0 { 0.0 } else { 2.0 / vnorm2 };
        for c in j..n {
            let col = &mut w.col_mut(c)[j..];
            let s = tau * dot(&v, col);
            axpy(-s, &v, col);
        }
        // Clean below-diagonal entries of column j.
        let col = w.col_mut(j);
        col[j] = alpha;
        col[j + 1..].iter_mut().for_each(|v| *v = 0.0);
        reflectors.push((v, tau));
    }

    let r = Mat::from_fn(k, n, |i, j| if i <= j { w[(i, j)] } else { 0.0 });

    let mut q = Mat::zeros(m, k);
    for i in 0..k {
        q[(i, i)] = 1.0;
    }
    for j in (0..k).rev() {
        let (v, tau) = &reflectors[j];
        if *tau == 0.0 {
            continue;
        }
        for c in 0..k {
            let col = &mut q.col_mut(c)[j..];
            let s = tau * dot(v, col);
            axpy(-s, v, col);
        }
    }
    (q, r)
}

/// Singular value decomposition `a = u · diag(s) · vᵀ` with `p = min(m, n)`
/// singular values in decreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of `u` belonging to zero singular values are zero.
pub fn svd(a: &Mat) -> Svd {
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let n = a.cols;
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    const TOL: f64 = 1e-15;

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if alpha == 0.0 || beta == 0.0 || abs(gamma) <= TOL * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (abs(zeta) + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                rotate_cols(&mut w, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| sqrt(dot(w.col(j), w.col(j)))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = Mat::zeros(a.rows, n);
    let mut vs = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        if sigma > 0.0 {
            for (o, x) in u.col_mut(dst).iter_mut().zip(w.col(src)) {
                *o = x / sigma;
            }
        }
        vs.col_mut(dst).copy_from_slice(v.col(src));
    }
    Svd { u, s, v: vs }
}

fn rotate_cols(m: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows;
    let (lo, hi) = m.data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Solves the square system `a x = b` by Gaussian elimination with complete
/// pivoting. Pivots below `rel_tol · max|a|` are treated as zero and the
/// corresponding unknowns set to zero, so the returned rank tells how many
/// directions were actually used.
pub fn solve_complete_pivot(a: &Mat, b: &[f64], rel_tol: f64) -> (Vec<f64>, usize) {
    let n = a.rows;
    assert_eq!(a.cols, n, "solve_complete_pivot: square matrix required");
    assert_eq!(b.len(), n);
    let mut w = a.clone();
    let mut rhs = b.to_vec();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let threshold = rel_tol * a.max_abs();
    let mut rank = 0;

    for k in 0..n {
        let (mut pi, mut pj, mut pv) = (k, k, 0.0);
        for j in k..n {
            for i in k..n {
                let v = abs(w[(i, j)]);
                if v > pv {
                    (pi, pj, pv) = (i, j, v);
                }
            }
        }
        if pv <= threshold || pv == 0.0 {
            break;
        }
        rank += 1;
        if pi != k {
            for j in 0..n {
                let t = w[(k, j)];
                w[(k, j)] = w[(pi, j)];
                w[(pi, j)] = t;
            }
            rhs.swap(k, pi);
        }
        if pj != k {
            for i in 0..n {
                let t = w[(i, k)];
                w[(i, k)] = w[(i, pj)];
                w[(i, pj)] = t;
            }
            col_perm.swap(k, pj);
        }
        let piv = w[(k, k)];
        for i in k + 1..n {
            let f = w[(i, k)] / piv;
            if f == 0.0 {
                continue;
            }
            w[(i, k)] = 0.0;
            for j in k + 1..n {
                let t = w[(k, j)];
                w[(i, j)] -= f * t;
            }
            rhs[i] -= f * rhs[k];
        }
    }

    let mut y = vec![0.0; n];
    for i in (0..rank).rev() {
        let mut s = rhs[i];
        for j in i + 1..rank {
            s -= w[(i, j)] * y[j];
        }
        y[i] = s / w[(i, i)];
    }
    let mut x = vec![0.0; n];
    for (k, &c) in col_perm.iter().enumerate() {
        x[c] = y[k];
    }
    (x, rank)
}

/// LU factorization with partial pivoting of a square dense matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self> {
        let n = a.rows;
        if a.cols != n {
            return Err(Error::DimensionMismatch(alloc::format!(
                "LU of a {}x{} matrix",
                a.rows,
                a.cols
            )));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let mut p = k;
            let mut pv = abs(lu[(k, k)]);
            for i in k + 1..n {
                let v = abs(lu[(i, k)]);
                if v > pv {
                    p = i;
                    pv = v;
                }
            }
            if pv <= 1e-14 * scale || pv == 0.0 {
                return Err(Error::Singular(alloc::format!("zero pivot at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                lu[(i, k)] /= piv;
            }
            for j in k + 1..n {
                let ukj = lu[(k, j)];
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    let l = lu[(i, k)];
                    lu[(i, j)] -= l * ukj;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solves `aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(m: usize, n: usize, seed: u64) -> Mat {
        let mut s = seed;
        Mat::from_fn(m, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        for &(m, n) in &[(7, 3), (3, 7), (5, 5), (1, 4)] {
            let a = sample(m, n, 3);
            let (q, r) = qr(&a);
            assert!(q.mul(&r).sub(&a).max_abs() < 1e-14);
            let k = m.min(n);
            assert!(q.t_mul(&q).sub(&Mat::identity(k)).max_abs() < 1e-14);
            for j in 0..n {
                for i in j + 1..k {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_of_rank_deficient_factor() {
        let c = sample(6, 1, 9);
        let a = Mat::hcat(&[&c, &c.scaled(2.0), &Mat::zeros(6, 1)]);
        let (q, r) = qr(&a);
        assert!(q.mul(&r).sub(&a).max_abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_sorted() {
        for &(m, n) in &[(8, 5), (5, 8), (6, 6)] {
            let a = sample(m, n, 11);
            let d = svd(&a);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let us = Mat::from_fn(d.u.rows(), d.s.len(), |i, j| d.u[(i, j)] * d.s[j]);
            assert!(us.mul_t(&d.v).sub(&a).max_abs() < 1e-13);
            let p = d.s.len();
            assert!(d.v.t_mul(&d.v).sub(&Mat::identity(p)).max_abs() < 1e-13);
        }
    }

    #[test]
    fn svd_of_zero_matrix() {
        let d = svd(&Mat::zeros(4, 3));
        assert!(d.s.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn complete_pivot_solves_and_detects_rank() {
        let a = sample(5, 5, 21);
        let x0: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let b = a.mul_vec(&x0);
        let (x, rank) = solve_complete_pivot(&a, &b, 1e-12);
        assert_eq!(rank, 5);
        for (u, v) in x.iter().zip(&x0) {
            assert!((u - v).abs() < 1e-12);
        }

        // Duplicate column: rank 4, residual still zero for a consistent rhs.
        let mut s = a.clone();
        let c0 = s.col(0).to_vec();
        s.col_mut(1).copy_from_slice(&c0);
        let b = s.mul_vec(&x0);
        let (x, rank) = solve_complete_pivot(&s, &b, 1e-12);
        assert_eq!(rank, 4);
        let r = s.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn lu_solves_both_orientations() {
        let a = sample(6, 6, 5);
        let lu = Lu::factor(&a).unwrap();
        let b: Vec<f64> = (0..6).map(|i| 1.0 + i as f64).collect();
        let x = lu.solve(&b);
        assert!(a.mul_vec(&x).iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
        let xt = lu.solve_transpose(&b);
        assert!(a.t_mul_vec(&xt).iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn lu_rejects_singular() {
        assert!(matches!(Lu::factor(&Mat::zeros(3, 3)), Err(Error::Singular(_))));
    }
}
