//! Compressed sparse row matrices and banded direct solvers.
//!
//! Matrices assembled on structured grids with lexicographic numbering have a
//! bandwidth equal to one grid row, which makes banded factorizations the
//! natural exact solver for the mean operator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::Mat;
use crate::math::{abs, sqrt};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    /// Explicit zeros are kept so that matrices assembled on the same mesh share
    /// one sparsity pattern.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows {
                return Err(Error::OutOfRange { index: i, len: nrows });
            }
            if j >= ncols {
                return Err(Error::OutOfRange { index: j, len: ncols });
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut slots: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            slots[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            let row = &mut slots[counts[i]..counts[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            let mut last = usize::MAX;
            for &(j, v) in row.iter() {
                if j == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = j;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(a: &Mat) -> Self {
        let mut t = Vec::new();
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.rows(), a.cols(), &t).expect("indices in range")
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Number of stored entries that are not exactly zero.
    pub fn nnz_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(abs(*v)))
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `Aᵀ x`
    pub fn t_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// `A B` for a dense `B`.
    pub fn mul_dense(&self, b: &Mat) -> Mat {
        assert_eq!(b.rows(), self.ncols, "CsrMatrix::mul_dense: inner dimension");
        let mut out = Mat::zeros(self.nrows, b.cols());
        for j in 0..b.cols() {
            let (src, dst) = (b.col(j), out.col_mut(j));
            self.mul_vec_into(src, dst);
        }
        out
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.values[k] * y[self.col_idx[k]];
            }
            s += xi * r;
        }
        s
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t).expect("indices in range")
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `Σ c_i A_i` for matrices of equal shape.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<Self> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::InvalidParameter("empty linear combination".into()));
        };
        let (n, m) = (first.nrows, first.ncols);
        if terms.iter().any(|(_, a)| a.nrows != n || a.ncols != m) {
            return Err(Error::DimensionMismatch("linear combination of differently sized matrices".into()));
        }
        if terms
            .iter()
            .all(|(_, a)| a.row_ptr == first.row_ptr && a.col_idx == first.col_idx)
        {
            let mut values = vec![0.0; first.values.len()];
            for (c, a) in terms {
                for (o, v) in values.iter_mut().zip(&a.values) {
                    *o += c * v;
                }
            }
            return Ok(Self {
                nrows: n,
                ncols: m,
                row_ptr: first.row_ptr.clone(),
                col_idx: first.col_idx.clone(),
                values,
            });
        }
        let t: Vec<_> = terms
            .iter()
            .flat_map(|(c, a)| a.triplets().map(move |(i, j, v)| (i, j, c * v)))
            .collect();
        Self::from_triplets(n, m, &t)
    }

    /// Extracts `A[rows, cols]`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (ni, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                let nj = col_map[j];
                if nj != usize::MAX {
                    t.push((ni, nj, v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t).expect("indices in range")
    }

    /// Symmetry up to `tol · max|A|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let thr = tol * self.max_abs();
        self.triplets().all(|(i, j, v)| abs(v - self.get(j, i)) <= thr)
    }

    /// Lower and upper bandwidths `(kl, ku)`.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for (i, j, _) in self.triplets() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        (kl, ku)
    }
}

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite banded
/// matrix.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // Row i holds L[i, i-bw..=i] at offsets 0..=bw.
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("Cholesky of {}x{}", n, a.ncols())));
        }
        let (kl, ku) = a.bandwidths();
        let bw = kl.max(ku);
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for (i, j, v) in a.triplets() {
            if j <= i {
                l[i * w + (j + bw - i)] = v;
            }
        }
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let j0 = j.saturating_sub(bw).max(i0);
                let mut s = l[i * w + (j + bw - i)];
                for k in j0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Factorization(format!(
                            "matrix not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    l[i * w + bw] = sqrt(s);
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let x = b[i] / self.l[i * w + bw];
            b[i] = x;
            for k in i.saturating_sub(bw)..i {
                b[k] -= self.l[i * w + (k + bw - i)] * x;
            }
        }
    }
}

/// LU factorization with partial pivoting of a general banded matrix.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    // Row window width: columns i-kl ..= i+kl+ku.
    width: usize,
    a: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch(format!("LU of {}x{}", n, m.ncols())));
        }
        let (kl, ku) = m.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut a = vec![0.0; n * width];
        // Index of column j in row i's window.
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        for (i, j, v) in m.triplets() {
            a[at(i, j)] = v;
        }
        let scale = m.max_abs();
        let mut ipiv = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut pv = abs(a[at(k, k)]);
            for i in k + 1..=last {
                let v = abs(a[at(i, k)]);
                if v > pv {
                    p = i;
                    pv = v;
                }
            }
            if pv == 0.0 || pv <= 1e-15 * scale {
                return Err(Error::Factorization(format!("zero pivot at column {k}")));
            }
            ipiv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    a.swap(at(k, j), at(p, j));
                }
            }
            let piv = a[at(k, k)];
            for i in k + 1..=last {
                let f = a[at(i, k)] / piv;
                a[at(i, k)] = f;
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    a[at(i, j)] -= f * a[at(k, j)];
                }
            }
        }
        Ok(Self { n, kl, width, a, ipiv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        let ku_total = width - kl - 1;
        for k in 0..n {
            b.swap(k, self.ipiv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.a[at(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku_total).min(n - 1) {
                s -= self.a[at(i, j)] * b[j];
            }
            b[i] = s / self.a[at(i, i)];
        }
    }
}

/// Exact factorization of a sparse matrix: Cholesky when symmetric, LU with
/// partial pivoting otherwise.
#[derive(Clone, Debug)]
pub enum SparseFactor {
    Cholesky(BandedCholesky),
    Lu(BandedLu),
}

impl SparseFactor {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.is_symmetric(1e-14) {
            Ok(Self::Cholesky(BandedCholesky::factor(a)?))
        } else {
            Ok(Self::Lu(BandedLu::factor(a)?))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Cholesky(c) => c.dim(),
            Self::Lu(l) => l.dim(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, Self::Cholesky(_))
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            Self::Cholesky(c) => c.solve_in_place(b),
            Self::Lu(l) => l.solve_in_place(b),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves column by column.
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let mut x = b.clone();
        for j in 0..x.cols() {
            self.solve_in_place(x.col_mut(j));
        }
        x
    }
}
