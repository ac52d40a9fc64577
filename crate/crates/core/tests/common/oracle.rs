//! Random operators and vectors, each operation checked against its dense
//! Kronecker-product counterpart.

use lrsg_core::chaos::SpectralBasis;
use lrsg_core::dense::Mat;
use lrsg_core::krylov::{apply_preconditioned, MeanPreconditioner};
use lrsg_core::lowrank::{
    inner, truncate_projection, truncate_svd, FactoredVector, ProjectionBasis, StochasticOperator, SvdTarget,
};
use lrsg_core::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{csr_to_na, dense_vec, kron_operator, mat_to_na, na_to_mat, rel_diff};

pub const TOL: f64 = 1e-11;

pub struct Instance {
    pub op: StochasticOperator,
    pub u: FactoredVector,
    pub v: FactoredVector,
    pub rng: ChaCha8Rng,
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// SPD tridiagonal `K_0` plus sparse symmetric `K_l`, paired with the chaos
/// matrices of a total-degree basis.
pub fn instance(seed: u64, nx: usize, m: usize, p: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sg = SpectralBasis::total_degree(m, p).unwrap().stochastic_matrices();
    let nxi = sg.g0.nrows();
    let mut ks = Vec::new();
    let mut t = Vec::new();
    for i in 0..nx {
        t.push((i, i, 4.0 + rng.random::<f64>()));
        if i + 1 < nx {
            let o = -1.0 + 0.2 * rng.random::<f64>();
            t.push((i, i + 1, o));
            t.push((i + 1, i, o));
        }
    }
    ks.push(CsrMatrix::from_triplets(nx, nx, &t).unwrap());
    for _ in 0..m {
        let mut t = Vec::new();
        for _ in 0..2 * nx {
            let (i, j) = (rng.random_range(0..nx), rng.random_range(0..nx));
            let v = 0.1 * (rng.random::<f64>() - 0.5);
            t.push((i, j, v));
            t.push((j, i, v));
        }
        ks.push(CsrMatrix::from_triplets(nx, nx, &t).unwrap());
    }
    let kf = rng.random_range(1..=3);
    let f = FactoredVector::new(random_mat(&mut rng, nx, kf), random_mat(&mut rng, nxi, kf)).unwrap();
    let op = StochasticOperator::new(ks, sg.all(), f).unwrap();
    let ku = rng.random_range(1..=5);
    let kv = rng.random_range(1..=5);
    let u = FactoredVector::new(random_mat(&mut rng, nx, ku), random_mat(&mut rng, nxi, ku)).unwrap();
    let v = FactoredVector::new(random_mat(&mut rng, nx, kv), random_mat(&mut rng, nxi, kv)).unwrap();
    Instance { op, u, v, rng }
}

/// Instance sizes small enough for the dense check.
pub fn admissible(nx: usize, m: usize, p: usize) -> bool {
    let nxi = lrsg_core::chaos::basis_size(m, p).unwrap();
    nxi <= 30 && nx * nxi <= 1500
}

pub fn orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Mat {
    let a = mat_to_na(&random_mat(rng, n, k));
    na_to_mat(&a.qr().q())
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

pub fn check_matvec(inst: &Instance) -> Result<(), String> {
    let au = inst.op.apply(&inst.u).unwrap();
    let err = rel_diff(&dense_vec(&au), &(kron_operator(&inst.op) * dense_vec(&inst.u)));
    ensure(err <= TOL, || format!("matvec differs by {err:e}"))?;
    ensure(au.rank() == inst.op.n_terms() * inst.u.rank(), || format!("matvec rank {}", au.rank()))
}

pub fn check_add_inner(inst: &Instance) -> Result<(), String> {
    let (du, dv) = (dense_vec(&inst.u), dense_vec(&inst.v));
    let err = rel_diff(&dense_vec(&inst.u.add(&inst.v).unwrap()), &(&du + &dv));
    ensure(err <= TOL, || format!("sum differs by {err:e}"))?;
    let ip = inner(&inst.u, &inst.v).unwrap();
    ensure((ip - du.dot(&dv)).abs() <= TOL * du.norm() * dv.norm(), || format!("inner product {ip} vs {}", du.dot(&dv)))?;
    ensure((inst.u.norm() - du.norm()).abs() <= TOL * du.norm(), || "norm differs".into())
}

/// Rank-`r` SVD truncation attains the Eckart-Young error and has an
/// orthonormal stochastic factor.
pub fn check_svd(inst: &Instance, r: usize) -> Result<(), String> {
    let w = inst.u.add(&inst.v).unwrap();
    let dm = mat_to_na(&w.to_dense());
    let sv = dm.clone().svd(false, false).singular_values;
    let opt: f64 = sv.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt();
    let t = truncate_svd(&w, SvdTarget::Rank(r));
    ensure(t.rank() <= r, || format!("rank {} above {r}", t.rank()))?;
    let err = (mat_to_na(&t.to_dense()) - &dm).norm();
    ensure((err - opt).abs() <= 1e-10 * dm.norm().max(1e-300), || format!("error {err:e}, optimum {opt:e}"))?;
    let zz = mat_to_na(t.z()).transpose() * mat_to_na(t.z());
    ensure((zz - DMatrix::identity(t.rank(), t.rank())).amax() <= 1e-12, || "Z not orthonormal".into())
}

/// Projection onto a random orthonormal basis of size `k`: matches
/// `U Z Zᵀ`, is idempotent, does not grow the norm, and has rank `k`.
pub fn check_projection(inst: &mut Instance, k: usize) -> Result<(), String> {
    let nxi = inst.op.n_xi();
    let k = k.min(nxi);
    let zc = orthonormal(&mut inst.rng, nxi, k);
    let basis = ProjectionBasis::new(zc.clone()).unwrap();
    let t = truncate_projection(&inst.u, &basis).unwrap();
    let z = mat_to_na(&zc);
    let full = mat_to_na(&inst.u.to_dense());
    let want = &full * &z * z.transpose();
    let got = mat_to_na(&t.to_dense());
    let err = (&got - &want).norm();
    ensure(err <= TOL * want.norm().max(full.norm()), || format!("projection differs by {err:e}"))?;
    let tt = truncate_projection(&t, &basis).unwrap();
    ensure((mat_to_na(&tt.to_dense()) - &got).norm() <= TOL * got.norm().max(1e-300), || "not idempotent".into())?;
    ensure(t.norm() <= inst.u.norm() * (1.0 + 1e-12), || "projection grew the norm".into())?;
    ensure(t.rank() == k, || format!("rank {} instead of {k}", t.rank()))
}

pub fn check_residual(inst: &Instance) -> Result<(), String> {
    let a = kron_operator(&inst.op);
    let fd = dense_vec(inst.op.rhs());
    let r: DVector<f64> = &fd - a * dense_vec(&inst.u);
    let got = inst.op.residual_norm(&inst.u).unwrap();
    ensure((got - r.norm()).abs() <= TOL * r.norm().max(fd.norm()), || format!("residual {got:e} vs {:e}", r.norm()))
}

/// `A (I ⊗ K₀⁻¹) u` against the dense product.
pub fn check_preconditioned(inst: &Instance) -> Result<(), String> {
    let pre = MeanPreconditioner::new(&inst.op).unwrap();
    let got = dense_vec(&apply_preconditioned(&inst.op, Some(&pre), &inst.u).unwrap());
    let k0inv = csr_to_na(&inst.op.spatial()[0]).try_inverse().unwrap();
    let minv = DMatrix::<f64>::identity(inst.op.n_xi(), inst.op.n_xi()).kronecker(&k0inv);
    let want = kron_operator(&inst.op) * minv * dense_vec(&inst.u);
    let err = rel_diff(&got, &want);
    ensure(err <= TOL, || format!("preconditioned apply differs by {err:e}"))?;
    ensure(pre.apply_inverse(&inst.u).rank() == inst.u.rank(), || "preconditioner changed the rank".into())
}

/// Every check on one instance, with truncation targets drawn from it.
pub fn check_all(seed: u64, nx: usize, m: usize, p: usize) -> Result<(), String> {
    let mut inst = instance(seed, nx, m, p);
    let r = inst.rng.random_range(0..=6);
    let k = inst.rng.random_range(1..=6);
    check_matvec(&inst)?;
    check_add_inner(&inst)?;
    check_svd(&inst, r)?;
    check_projection(&mut inst, k)?;
    check_residual(&inst)?;
    check_preconditioned(&inst)
}
