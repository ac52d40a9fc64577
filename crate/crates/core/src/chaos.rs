//! Total-degree polynomial chaos for independent uniform variables on
//! `[−√3, √3]` (zero mean, unit variance).
//!
//! Multi-indices are ordered by total degree, then in descending
//! lexicographic order within a degree, so the degree-one index in coordinate
//! 1 comes right after the constant.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, cos, sqrt};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Default cap on the basis size.
pub const DEFAULT_BASIS_LIMIT: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiIndexSet {
    dim: usize,
    degree: usize,
    // Row-major: index s occupies data[s*dim .. (s+1)*dim].
    data: Vec<u16>,
    position: BTreeMap<Vec<u16>, usize>,
}

/// `(M+p)! / (M! p!)`, or `None` on overflow.
pub fn basis_size(dim: usize, degree: usize) -> Option<usize> {
    let k = dim.min(degree) as u128;
    let n = (dim + degree) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    usize::try_from(acc).ok()
}

pub fn build_index_set(dim: usize, degree: usize) -> Result<MultiIndexSet> {
    build_index_set_with_limit(dim, degree, DEFAULT_BASIS_LIMIT)
}

pub fn build_index_set_with_limit(dim: usize, degree: usize, limit: usize) -> Result<MultiIndexSet> {
    let n = basis_size(dim, degree)
        .filter(|&n| n <= limit)
        .ok_or(Error::BasisOverflow { dim, degree, limit })?;
    if degree > u16::MAX as usize {
        return Err(Error::BasisOverflow { dim, degree, limit });
    }
    let mut data = Vec::with_capacity(n * dim);
    let mut cur = vec![0u16; dim];
    for d in 0..=degree {
        push_exact(&mut data, &mut cur, 0, d);
    }
    let position = data
        .chunks(dim.max(1))
        .take(n)
        .enumerate()
        .map(|(s, a)| (if dim == 0 { Vec::new() } else { a.to_vec() }, s))
        .collect();
    Ok(MultiIndexSet {
        dim,
        degree,
        data,
        position,
    })
}

// Appends all indices with entries from `pos` on summing to `rem`, in
// descending lexicographic order.
fn push_exact(out: &mut Vec<u16>, cur: &mut [u16], pos: usize, rem: usize) {
    if pos == cur.len() {
        if rem == 0 {
            out.extend_from_slice(cur);
        }
        return;
    }
    if pos + 1 == cur.len() {
        cur[pos] = rem as u16;
        out.extend_from_slice(cur);
        cur[pos] = 0;
        return;
    }
    for a in (0..=rem).rev() {
        cur[pos] = a as u16;
        push_exact(out, cur, pos + 1, rem - a);
    }
    cur[pos] = 0;
}

impl MultiIndexSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `n_ξ`.
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            1
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The multi-index with ordinal `s` (0-based).
    pub fn get(&self, s: usize) -> &[u16] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }

    pub fn position(&self, alpha: &[u16]) -> Option<usize> {
        self.position.get(alpha).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> {
        (0..self.len()).map(move |s| self.get(s))
    }
}

/// Recurrence coefficient `β_n` of the orthonormal Legendre polynomials for
/// the uniform density on `[−√3, √3]`: `ξ π_n = β_{n+1} π_{n+1} + β_n π_{n−1}`.
///
/// Obtained from `(n+1) P_{n+1} = (2n+1) t P_n − n P_{n−1}` with `ξ = √3 t`
/// and `π_n = √(2n+1) P_n`.
pub fn recurrence_beta(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    sqrt(3.0) * n / sqrt((2.0 * n - 1.0) * (2.0 * n + 1.0))
}

/// Values `π_0(ξ), …, π_p(ξ)`.
pub fn univariate_values(p: usize, xi: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(p + 1);
    v.push(1.0);
    if p >= 1 {
        v.push(xi / recurrence_beta(1));
    }
    for n in 1..p {
        let next = (xi * v[n] - recurrence_beta(n) * v[n - 1]) / recurrence_beta(n + 1);
        v.push(next);
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub index_set: MultiIndexSet,
    /// `β_0 … β_p`.
    pub beta: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(index_set: MultiIndexSet) -> Self {
        let beta = (0..=index_set.degree()).map(recurrence_beta).collect();
        Self { index_set, beta }
    }

    pub fn total_degree(dim: usize, degree: usize) -> Result<Self> {
        Ok(Self::new(build_index_set(dim, degree)?))
    }

    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `ψ_s(ξ) = Π_i π_{α_i(s)}(ξ_i)` for the 0-based ordinal `s`.
    pub fn eval(&self, s: usize, xi: &[f64]) -> Result<f64> {
        let n = self.len();
        if s >= n {
            return Err(Error::OutOfRange { index: s, len: n });
        }
        if xi.len() != self.index_set.dim() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "point has {} coordinates, basis has {}",
                xi.len(),
                self.index_set.dim()
            )));
        }
        let mut v = 1.0;
        for (&a, &x) in self.index_set.get(s).iter().zip(xi) {
            if a > 0 {
                v *= univariate_values(a as usize, x)[a as usize];
            }
        }
        Ok(v)
    }

    pub fn stochastic_matrices(&self) -> StochasticMatrices {
        build_stochastic_matrices(self)
    }
}

/// `G_0 = I`, `[G_l]_{ij} = ⟨ξ_l ψ_i ψ_j⟩`, `g_0 = e_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrices {
    pub g0: CsrMatrix,
    pub gl: Vec<CsrMatrix>,
    pub g0_vec: Vec<f64>,
}

impl StochasticMatrices {
    /// `G_0, G_1, …, G_M` in one list.
    pub fn all(&self) -> Vec<CsrMatrix> {
        let mut v = Vec::with_capacity(self.gl.len() + 1);
        v.push(self.g0.clone());
        v.extend(self.gl.iter().cloned());
        v
    }
}

pub fn build_stochastic_matrices(basis: &SpectralBasis) -> StochasticMatrices {
    let set = &basis.index_set;
    let n = set.len();
    let mut gl = Vec::with_capacity(set.dim());
    let mut shifted = vec![0u16; set.dim()];
    for l in 0..set.dim() {
        let mut t = Vec::new();
        for i in 0..n {
            let a = set.get(i);
            shifted.copy_from_slice(a);
            shifted[l] += 1;
            if let Some(j) = set.position(&shifted) {
                let b = basis.beta[shifted[l] as usize];
                t.push((i, j, b));
                t.push((j, i, b));
            }
        }
        gl.push(CsrMatrix::from_triplets(n, n, &t).expect("indices in range"));
    }
    let mut g0_vec = vec![0.0; n];
    g0_vec[0] = 1.0;
    StochasticMatrices {
        g0: CsrMatrix::identity(n),
        gl,
        g0_vec,
    }
}

/// Gauss-Legendre nodes and weights on `[−1, 1]`, by Newton iteration on the
/// Legendre three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pi = core::f64::consts::PI;
    for i in 0..n.div_ceil(2) {
        let mut z = cos(pi * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if abs(dz) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities() {
        assert_eq!(build_index_set(5, 3).unwrap().len(), 56);
        assert_eq!(build_index_set(7, 4).unwrap().len(), 330);
        let s = build_index_set(3, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(0), &[0, 0, 0]);
    }

    #[test]
    fn enumeration_counts_match_formula() {
        for m in 1..=20 {
            for p in 0..=5 {
                let s = build_index_set(m, p).unwrap();
                assert_eq!(Some(s.len()), basis_size(m, p), "M={m} p={p}");
                assert!(s.iter().all(|a| a.iter().map(|&v| v as usize).sum::<usize>() <= p));
            }
        }
    }

    #[test]
    fn ordering_is_graded_descending_lex() {
        let s = build_index_set(2, 2).unwrap();
        let got: Vec<&[u16]> = s.iter().collect();
        let want: [&[u16]; 6] = [&[0, 0], &[1, 0], &[0, 1], &[2, 0], &[1, 1], &[0, 2]];
        assert_eq!(got, want);
        for (i, a) in s.iter().enumerate() {
            assert_eq!(s.position(a), Some(i));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let err = build_index_set_with_limit(30, 10, 1000).unwrap_err();
        assert!(matches!(err, Error::BasisOverflow { dim: 30, degree: 10, limit: 1000 }));
        assert!(basis_size(200, 200).is_none());
    }

    #[test]
    fn matrix_structure() {
        let b = SpectralBasis::total_degree(4, 3).unwrap();
        let g = b.stochastic_matrices();
        assert_eq!(g.g0, CsrMatrix::identity(b.len()));
        assert_eq!(g.g0_vec[0], 1.0);
        for (l, gl) in g.gl.iter().enumerate() {
            assert!(gl.nnz() <= 2 * b.len());
            assert!(gl.is_symmetric(0.0));
            for i in 0..b.len() {
                assert!(gl.row(i).count() <= 2);
            }
            // G_l e_1 has a single entry, at the degree-one index in coordinate l.
            let col = gl.mul_vec(&g.g0_vec);
            let nz: Vec<usize> = (0..col.len()).filter(|&i| col[i] != 0.0).collect();
            assert_eq!(nz, vec![l + 1]);
            assert_eq!(col[l + 1], recurrence_beta(1));
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m8 - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn eval_errors() {
        let b = SpectralBasis::total_degree(2, 2).unwrap();
        assert!(matches!(b.eval(6, &[0.0, 0.0]), Err(Error::OutOfRange { .. })));
        assert!(b.eval(0, &[0.0]).is_err());
        assert_eq!(b.eval(0, &[1.2, -0.3]).unwrap(), 1.0);
    }
}
