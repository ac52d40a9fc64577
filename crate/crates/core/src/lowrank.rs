//! Factored vectors `mat(u) = Y Zᵀ` and the Kronecker-sum operator acting on
//! them.
//!
//! With `vec` stacking the columns of `mat(u)`, `(G ⊗ K) vec(Y Zᵀ)` equals
//! `vec((K Y)(G Z)ᵀ)`, so an operator with `T` terms maps rank `κ` to rank
//! `T·κ` without ever forming the `n_x·n_ξ` vector.

use alloc::format;
use alloc::vec::Vec;

use crate::chaos::StochasticMatrices;
use crate::dense::{qr, svd, Mat};
use crate::fem::SpatialMatrices;
use crate::math::sqrt;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FactoredVector {
    y: Mat,
    z: Mat,
}

impl FactoredVector {
    pub fn new(y: Mat, z: Mat) -> Result<Self> {
        if y.cols() != z.cols() {
            return Err(Error::DimensionMismatch(format!(
                "factor ranks differ: Y has {} columns, Z has {}",
                y.cols(),
                z.cols()
            )));
        }
        Ok(Self { y, z })
    }

    /// The canonical zero vector: rank 0 with empty factors.
    pub fn zero(n_x: usize, n_xi: usize) -> Self {
        Self {
            y: Mat::zeros(n_x, 0),
            z: Mat::zeros(n_xi, 0),
        }
    }

    pub fn rank_one(y: &[f64], z: &[f64]) -> Self {
        Self {
            y: Mat::from_col_major(y.len(), 1, y.to_vec()),
            z: Mat::from_col_major(z.len(), 1, z.to_vec()),
        }
    }

    pub fn y(&self) -> &Mat {
        &self.y
    }

    pub fn z(&self) -> &Mat {
        &self.z
    }

    pub fn into_factors(self) -> (Mat, Mat) {
        (self.y, self.z)
    }

    pub fn rank(&self) -> usize {
        self.y.cols()
    }

    pub fn n_x(&self) -> usize {
        self.y.rows()
    }

    pub fn n_xi(&self) -> usize {
        self.z.rows()
    }

    /// `mat(u) = Y Zᵀ` as a dense `n_x × n_ξ` matrix.
    pub fn to_dense(&self) -> Mat {
        self.y.mul_t(&self.z)
    }

    /// `vec(mat(u))`, the stacked columns.
    pub fn to_vec(&self) -> Vec<f64> {
        self.to_dense().into_vec()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            y: self.y.scaled(s),
            z: self.z.clone(),
        }
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        if self.n_x() != other.n_x() || self.n_xi() != other.n_xi() {
            return Err(Error::DimensionMismatch(format!(
                "factored vectors of size {}x{} and {}x{}",
                self.n_x(),
                self.n_xi(),
                other.n_x(),
                other.n_xi()
            )));
        }
        Ok(())
    }

    /// `u + v` by factor concatenation; the rank is `κ_u + κ_v`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        Ok(Self {
            y: Mat::hcat(&[&self.y, &other.y]),
            z: Mat::hcat(&[&self.z, &other.z]),
        })
    }

    /// `u + alpha·v`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        Ok(Self {
            y: Mat::hcat(&[&self.y, &other.y.scaled(alpha)]),
            z: Mat::hcat(&[&self.z, &other.z]),
        })
    }

    /// `Σ_i c_i v_i` by concatenation.
    pub fn combination(n_x: usize, n_xi: usize, terms: &[(f64, &FactoredVector)]) -> Result<Self> {
        let mut ys = Vec::with_capacity(terms.len());
        let mut zs = Vec::with_capacity(terms.len());
        for (c, v) in terms {
            if v.n_x() != n_x || v.n_xi() != n_xi {
                return Err(Error::DimensionMismatch("combination of differently sized vectors".into()));
            }
            ys.push(v.y.scaled(*c));
            zs.push(&v.z);
        }
        let yr: Vec<&Mat> = ys.iter().collect();
        if ys.is_empty() {
            return Ok(Self::zero(n_x, n_xi));
        }
        Ok(Self {
            y: Mat::hcat(&yr),
            z: Mat::hcat(&zs),
        })
    }

    /// Replaces the spatial factor by `f(Y)` (same rank).
    pub fn map_y(&self, f: impl FnOnce(&Mat) -> Mat) -> Self {
        let y = f(&self.y);
        assert_eq!(y.cols(), self.z.cols());
        Self { y, z: self.z.clone() }
    }

    /// Rewrites the factors with rank at most `min(n_x, n_ξ)` without changing
    /// `mat(u)`; a no-op when the rank is already small enough.
    pub fn compress_exact(&self) -> Self {
        let k = self.rank();
        if k > self.n_xi() {
            let (q, r) = qr(&self.z);
            Self {
                y: self.y.mul_t(&r),
                z: q,
            }
        } else if k > self.n_x() {
            let (q, r) = qr(&self.y);
            Self {
                y: q,
                z: self.z.mul_t(&r),
            }
        } else {
            self.clone()
        }
    }

    /// Frobenius norm of `mat(u)` from the triangular factors of `Y` and `Z`.
    ///
    /// Going through QR avoids the square-root loss of accuracy a Gram-matrix
    /// expansion suffers when `u` is a difference of nearly equal vectors.
    pub fn norm(&self) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let u = self.compress_exact();
        let (_, ry) = qr(&u.y);
        let (_, rz) = qr(&u.z);
        ry.mul_t(&rz).fro_norm()
    }
}

/// `⟨u, v⟩ = trace((Y_uᵀ Y_v)(Z_vᵀ Z_u))` from the two small Gram matrices.
pub fn inner(u: &FactoredVector, v: &FactoredVector) -> Result<f64> {
    u.check_dims(v)?;
    if u.rank() == 0 || v.rank() == 0 {
        return Ok(0.0);
    }
    let gy = u.y.t_mul(&v.y);
    let gz = u.z.t_mul(&v.z);
    Ok(gy.as_slice().iter().zip(gz.as_slice()).map(|(a, b)| a * b).sum())
}

/// Kronecker-sum operator `Σ_l G_l ⊗ K_l` with its right-hand side.
#[derive(Clone, Debug)]
pub struct StochasticOperator {
    k: Vec<CsrMatrix>,
    g: Vec<CsrMatrix>,
    rhs: FactoredVector,
}

impl StochasticOperator {
    pub fn new(k: Vec<CsrMatrix>, g: Vec<CsrMatrix>, rhs: FactoredVector) -> Result<Self> {
        if k.is_empty() || k.len() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} spatial and {} stochastic terms",
                k.len(),
                g.len()
            )));
        }
        let (nx, nxi) = (k[0].nrows(), g[0].nrows());
        if k.iter().any(|m| m.nrows() != nx || m.ncols() != nx) || g.iter().any(|m| m.nrows() != nxi || m.ncols() != nxi) {
            return Err(Error::DimensionMismatch("operator terms of inconsistent size".into()));
        }
        if rhs.n_x() != nx || rhs.n_xi() != nxi {
            return Err(Error::DimensionMismatch(format!(
                "rhs is {}x{}, operator is {}x{}",
                rhs.n_x(),
                rhs.n_xi(),
                nx,
                nxi
            )));
        }
        Ok(Self { k, g, rhs })
    }

    /// Pairs the assembled spatial terms with `G_0 … G_M`; the right-hand side
    /// is `g_0 ⊗ f_0` (any boundary lift is added separately).
    pub fn from_assembly(spatial: &SpatialMatrices, stochastic: &StochasticMatrices) -> Result<Self> {
        let rhs = FactoredVector::rank_one(&spatial.f0, &stochastic.g0_vec);
        Self::new(spatial.operator_terms(), stochastic.all(), rhs)
    }

    pub fn n_terms(&self) -> usize {
        self.k.len()
    }

    pub fn n_x(&self) -> usize {
        self.k[0].nrows()
    }

    pub fn n_xi(&self) -> usize {
        self.g[0].nrows()
    }

    pub fn spatial(&self) -> &[CsrMatrix] {
        &self.k
    }

    pub fn stochastic(&self) -> &[CsrMatrix] {
        &self.g
    }

    pub fn rhs(&self) -> &FactoredVector {
        &self.rhs
    }

    pub fn with_rhs(&self, rhs: FactoredVector) -> Result<Self> {
        Self::new(self.k.clone(), self.g.clone(), rhs)
    }

    /// True when every `K_l` and `G_l` is symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.k.iter().all(|m| m.is_symmetric(1e-13)) && self.g.iter().all(|m| m.is_symmetric(1e-13))
    }

    /// `A u` with factors `[K_0 Y | … | K_M Y]` and `[G_0 Z | … | G_M Z]`.
    pub fn apply(&self, u: &FactoredVector) -> Result<FactoredVector> {
        if u.n_x() != self.n_x() || u.n_xi() != self.n_xi() {
            return Err(Error::DimensionMismatch(format!(
                "vector is {}x{}, operator is {}x{}",
                u.n_x(),
                u.n_xi(),
                self.n_x(),
                self.n_xi()
            )));
        }
        let ys: Vec<Mat> = self.k.iter().map(|k| k.mul_dense(&u.y)).collect();
        let zs: Vec<Mat> = self.g.iter().map(|g| g.mul_dense(&u.z)).collect();
        let yr: Vec<&Mat> = ys.iter().collect();
        let zr: Vec<&Mat> = zs.iter().collect();
        Ok(FactoredVector {
            y: Mat::hcat(&yr),
            z: Mat::hcat(&zr),
        })
    }

    /// `f − A u`, untruncated.
    pub fn residual(&self, u: &FactoredVector) -> Result<FactoredVector> {
        self.rhs.add_scaled(-1.0, &self.apply(u)?)
    }

    pub fn residual_norm(&self, u: &FactoredVector) -> Result<f64> {
        Ok(self.residual(u)?.norm())
    }

    pub fn relative_residual(&self, u: &FactoredVector) -> Result<f64> {
        let f = self.rhs.norm();
        let r = self.residual_norm(u)?;
        Ok(if f == 0.0 { r } else { r / f })
    }
}

/// Orthonormal stochastic basis `Z^c` for the projection truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionBasis {
    zc: Mat,
}

impl ProjectionBasis {
    /// Fails when `‖Zcᵀ Zc − I‖_max > 1e-10`.
    pub fn new(zc: Mat) -> Result<Self> {
        let dev = zc.t_mul(&zc).sub(&Mat::identity(zc.cols())).max_abs();
        if !(dev <= 1e-10) {
            return Err(Error::NotOrthonormal { deviation: dev });
        }
        Ok(Self { zc })
    }

    pub fn zc(&self) -> &Mat {
        &self.zc
    }

    pub fn rank(&self) -> usize {
        self.zc.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SvdTarget {
    Rank(usize),
    /// Relative Frobenius tolerance `τ`.
    Tolerance(f64),
}

/// Singular values below this fraction of the largest are always dropped.
pub const SVD_DROP: f64 = 1e-14;

/// Best approximation of `mat(u)` of the requested rank or accuracy: QR of
/// both factors, SVD of `R_Y R_Zᵀ`, singular values folded into `Y`.
pub fn truncate_svd(u: &FactoredVector, target: SvdTarget) -> FactoredVector {
    if u.rank() == 0 {
        return u.clone();
    }
    let (qy, ry) = qr(&u.y);
    let (qz, rz) = qr(&u.z);
    let d = svd(&ry.mul_t(&rz));
    let s1 = d.s.first().copied().unwrap_or(0.0);
    let numerical = d.s.iter().take_while(|&&s| s > SVD_DROP * s1).count();
    let keep = match target {
        SvdTarget::Rank(k) => k.min(numerical),
        SvdTarget::Tolerance(tau) => {
            let total: f64 = d.s.iter().map(|s| s * s).sum();
            let mut tail = total;
            let mut k = 0;
            while k < numerical && tail > tau * tau * total {
                tail -= d.s[k] * d.s[k];
                k += 1;
            }
            k
        }
    };
    let us = Mat::from_fn(d.u.rows(), keep, |i, j| d.u[(i, j)] * d.s[j]);
    FactoredVector {
        y: qy.mul(&us),
        z: qz.mul(&d.v.columns(0, keep)),
    }
}

/// `(Y (Zᵀ Z^c), Z^c)`: orthogonal projection of the stochastic index onto
/// `span(Z^c)`.
pub fn truncate_projection(u: &FactoredVector, basis: &ProjectionBasis) -> Result<FactoredVector> {
    if u.n_xi() != basis.zc.rows() {
        return Err(Error::DimensionMismatch(format!(
            "vector has n_xi = {}, basis has {} rows",
            u.n_xi(),
            basis.zc.rows()
        )));
    }
    let c = u.z.t_mul(&basis.zc);
    Ok(FactoredVector {
        y: u.y.mul(&c),
        z: basis.zc.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Truncation {
    /// No approximation; only the exact rank bound `min(n_x, n_ξ)` is
    /// enforced.
    None,
    Svd(SvdTarget),
    Projection(ProjectionBasis),
}

impl Truncation {
    pub fn apply(&self, u: &FactoredVector) -> Result<FactoredVector> {
        match self {
            Self::None => Ok(u.compress_exact()),
            Self::Svd(t) => Ok(truncate_svd(u, *t)),
            Self::Projection(b) => truncate_projection(u, b),
        }
    }

    pub fn target_rank(&self) -> Option<usize> {
        match self {
            Self::None | Self::Svd(SvdTarget::Tolerance(_)) => None,
            Self::Svd(SvdTarget::Rank(k)) => Some(*k),
            Self::Projection(b) => Some(b.rank()),
        }
    }
}

/// Orthonormal stochastic factor of the SVD of `mat(u)` restricted to the
/// numerical rank: the basis `Z^c` used by the multilevel truncation.
pub fn stochastic_basis(u: &FactoredVector, rank: Option<usize>) -> Result<ProjectionBasis> {
    let t = truncate_svd(u, SvdTarget::Rank(rank.unwrap_or(usize::MAX)));
    ProjectionBasis::new(t.z)
}

/// Relative Frobenius distance helper used by diagnostics.
pub fn relative_distance(a: &FactoredVector, b: &FactoredVector) -> Result<f64> {
    let d = a.add_scaled(-1.0, b)?.norm();
    let n = a.norm();
    Ok(if n == 0.0 { d } else { d / n })
}

/// `sqrt(inner(u, u))`, cheaper than [`FactoredVector::norm`] but only
/// accurate to about `sqrt(eps)` relative when `u` nearly cancels.
pub fn gram_norm(u: &FactoredVector) -> f64 {
    sqrt(inner(u, u).unwrap_or(0.0).max(0.0))
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

    fn fv(nx: usize, nxi: usize, k: usize, seed: u64) -> FactoredVector {
        FactoredVector::new(sample(nx, k, seed), sample(nxi, k, seed + 1)).unwrap()
    }

    #[test]
    fn zero_vector_behaviour() {
        let z = FactoredVector::zero(4, 3);
        assert_eq!(z.rank(), 0);
        assert_eq!(z.norm(), 0.0);
        let u = fv(4, 3, 2, 1);
        assert_eq!(u.add(&z).unwrap().to_dense(), u.to_dense());
        assert_eq!(inner(&u, &z).unwrap(), 0.0);
    }

    #[test]
    fn cancellation_is_representational() {
        let u = fv(6, 5, 3, 7);
        let d = u.add_scaled(-1.0, &u).unwrap();
        assert_eq!(d.rank(), 6);
        assert!(d.norm() <= 1e-13 * u.norm());
    }

    #[test]
    fn norm_matches_dense() {
        let u = fv(7, 4, 9, 3);
        assert!((u.norm() - u.to_dense().fro_norm()).abs() < 1e-13 * u.norm());
        let c = u.compress_exact();
        assert_eq!(c.rank(), 4);
        assert!(c.to_dense().sub(&u.to_dense()).max_abs() < 1e-13);
    }

    #[test]
    fn unit_tensor_inner() {
        let mut e = alloc::vec![0.0; 5];
        e[2] = 1.0;
        let mut f = alloc::vec![0.0; 3];
        f[1] = 1.0;
        let u = FactoredVector::rank_one(&e, &f);
        assert_eq!(inner(&u, &u).unwrap(), 1.0);
    }

    #[test]
    fn exact_rank_recovered() {
        let base = fv(8, 6, 2, 11);
        let mut y = base.y().clone();
        let mut z = base.z().clone();
        for k in 0..5 {
            let a = sample(2, 1, 40 + k);
            y.push_col(&base.y().mul_vec(a.as_slice()));
            z.push_col(&alloc::vec![0.0; 6]);
        }
        let u = FactoredVector::new(y, z).unwrap();
        let t = truncate_svd(&u, SvdTarget::Rank(2));
        assert_eq!(t.rank(), 2);
        assert!(t.to_dense().sub(&u.to_dense()).max_abs() < 1e-12);
    }

    #[test]
    fn tolerance_mode() {
        let u = fv(10, 8, 6, 5);
        let t = truncate_svd(&u, SvdTarget::Tolerance(0.5));
        let err = t.to_dense().sub(&u.to_dense()).fro_norm();
        assert!(err <= 0.5 * u.norm() + 1e-14);
        let t1 = truncate_svd(&u, SvdTarget::Rank(t.rank().saturating_sub(1)));
        assert!(t1.to_dense().sub(&u.to_dense()).fro_norm() > 0.5 * u.norm());
    }

    #[test]
    fn projection_rejects_non_orthonormal() {
        let zc = sample(6, 2, 3);
        assert!(matches!(ProjectionBasis::new(zc), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn operator_rank_bookkeeping() {
        let k = alloc::vec![CsrMatrix::identity(4); 3];
        let g = alloc::vec![CsrMatrix::identity(2); 3];
        let op = StochasticOperator::new(k, g, FactoredVector::zero(4, 2)).unwrap();
        assert_eq!(op.apply(&fv(4, 2, 2, 1)).unwrap().rank(), 6);
        assert_eq!(op.apply(&FactoredVector::zero(4, 2)).unwrap().rank(), 0);
        assert!(op.apply(&fv(3, 2, 1, 1)).is_err());
    }
}
