//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use lrsg_core::chaos::SpectralBasis;
use lrsg_core::dense::Mat;
use lrsg_core::fem::{assemble_diffusion, make_grid, Stretch};
use lrsg_core::lowrank::{FactoredVector, StochasticOperator};
use lrsg_core::randfield::{build_kl, ExponentialCovariance, KlTruncation, Rect};
use lrsg_core::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};

pub mod nystrom;
pub mod oracle;

pub fn csr_to_na(m: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplets() {
        d[(i, j)] += v;
    }
    d
}

pub fn mat_to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn na_to_mat(m: &DMatrix<f64>) -> Mat {
    Mat::from_col_major(m.nrows(), m.ncols(), m.as_slice().to_vec())
}

/// `Σ_l G_l ⊗ K_l` as one dense matrix.
pub fn kron_operator(op: &StochasticOperator) -> DMatrix<f64> {
    let n = op.n_x() * op.n_xi();
    let mut a = DMatrix::zeros(n, n);
    for (k, g) in op.spatial().iter().zip(op.stochastic()) {
        a += csr_to_na(g).kronecker(&csr_to_na(k));
    }
    a
}

/// `vec(Y Zᵀ)`.
pub fn dense_vec(u: &FactoredVector) -> DVector<f64> {
    let m = mat_to_na(u.y()) * mat_to_na(u.z()).transpose();
    DVector::from_column_slice(m.as_slice())
}

pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// Textbook restarted GMRES(m): Arnoldi with modified Gram-Schmidt and Givens
/// rotations on the Hessenberg matrix.
pub fn dense_gmres(a: &DMatrix<f64>, b: &DVector<f64>, m: usize, tol: f64, max_restarts: usize) -> DVector<f64> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let bn = b.norm();
    for _ in 0..max_restarts {
        let r = b - a * &x;
        let beta = r.norm();
        if beta <= tol * bn {
            break;
        }
        let mut v = vec![r / beta];
        let mut h = DMatrix::zeros(m + 1, m);
        let mut cs = vec![(1.0, 0.0); m];
        let mut g = DVector::zeros(m + 1);
        g[0] = beta;
        let mut k = 0;
        while k < m {
            let mut w = a * &v[k];
            for i in 0..=k {
                h[(i, k)] = w.dot(&v[i]);
                w -= &v[i] * h[(i, k)];
            }
            h[(k + 1, k)] = w.norm();
            for i in 0..k {
                let (c, s) = cs[i];
                let (p, q) = (h[(i, k)], h[(i + 1, k)]);
                h[(i, k)] = c * p + s * q;
                h[(i + 1, k)] = -s * p + c * q;
            }
            let d = h[(k, k)].hypot(h[(k + 1, k)]);
            let (c, s) = (h[(k, k)] / d, h[(k + 1, k)] / d);
            cs[k] = (c, s);
            h[(k, k)] = d;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            let wn = w.norm();
            k += 1;
            if g[k].abs() <= tol * bn || wn == 0.0 {
                break;
            }
            v.push(w / wn);
        }
        let hk = h.view((0, 0), (k, k)).into_owned();
        let y = hk.solve_upper_triangular(&g.rows(0, k).into_owned()).expect("nonsingular Hessenberg");
        for i in 0..k {
            x += &v[i] * y[i];
        }
    }
    x
}

/// Diffusion operator on the unit square with `Terms(m)` KL modes.
pub fn diffusion_operator(level: usize, m: usize, p: usize, sigma: f64, corr_len: f64) -> StochasticOperator {
    let cov = ExponentialCovariance::new(sigma, corr_len, Rect::UNIT).unwrap();
    let kl = build_kl(&cov, 1.0, KlTruncation::Terms(m)).unwrap();
    let grid = make_grid(level, Rect::UNIT, Stretch::Uniform).unwrap();
    let sm = assemble_diffusion(&grid, &kl).unwrap();
    let sg = SpectralBasis::total_degree(m, p).unwrap().stochastic_matrices();
    StochasticOperator::from_assembly(&sm, &sg).unwrap()
}
