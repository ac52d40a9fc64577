//! Proper generalized decomposition: the solution is built one separated pair
//! `y(x) z(ξ)` at a time, each pair found by alternating a spatial solve with
//! a stochastic solve, and the stochastic factors are periodically refitted
//! together.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{Lu, Mat};
use crate::fem::{BoundaryLift, SpatialMatrices};
use crate::iterative::{cg, gmres};
use crate::lowrank::{truncate_svd, FactoredVector, ProjectionBasis, StochasticOperator, SvdTarget};
use crate::math::{dot, norm2, sqrt};
use crate::sparse::{CsrMatrix, SparseFactor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlternationConfig {
    /// Stop when the rank-one increment changes by less than this (relative).
    pub tol: f64,
    pub max_sweeps: usize,
    /// Random restarts allowed after a singular reduced system.
    pub max_restarts: usize,
}

impl Default for AlternationConfig {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            max_sweeps: 10,
            max_restarts: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdatePolicy {
    Never,
    /// Refit the stochastic factors once, after the last enrichment.
    AtEnd,
    /// Refit after every `k` enrichments and once more at the end.
    Every(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdConfig {
    pub eps: f64,
    pub update: UpdatePolicy,
    pub max_rank: usize,
    /// Residual is evaluated after the first enrichment and then every
    /// `check_every` enrichments.
    pub check_every: usize,
    pub update_tol: f64,
    pub update_max_iter: usize,
    pub alternation: AlternationConfig,
    pub seed: u64,
}

impl PgdConfig {
    pub fn diffusion(eps: f64) -> Self {
        Self {
            eps,
            update: UpdatePolicy::AtEnd,
            max_rank: 400,
            check_every: 5,
            update_tol: 1e-10,
            update_max_iter: 5000,
            alternation: AlternationConfig::default(),
            seed: 0,
        }
    }

    pub fn convection_diffusion(eps: f64) -> Self {
        Self {
            update: UpdatePolicy::Every(5),
            ..Self::diffusion(eps)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("eps must be > 0, got {}", self.eps)));
        }
        if self.check_every == 0 || self.update == UpdatePolicy::Every(0) {
            return Err(Error::InvalidParameter("check and update intervals must be >= 1".into()));
        }
        if self.max_rank == 0 {
            return Err(Error::InvalidParameter("max_rank must be >= 1".into()));
        }
        Ok(())
    }
}

/// One separated pair, with `‖z‖ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOne {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub sweeps: usize,
    pub restarts: usize,
}

#[derive(Clone, Debug)]
pub struct PgdSolution {
    pub factors: FactoredVector,
    pub kappa: usize,
    pub rel_residual: f64,
    /// Orthonormal stochastic basis from the SVD of the solution.
    pub zc: ProjectionBasis,
    pub converged: bool,
    /// `(rank, relative residual)` at every check.
    pub history: Vec<(usize, f64)>,
    pub sweeps: usize,
    pub restarts: usize,
    pub updates: usize,
}

/// `Σ_l (zᵀ G_l z) K_l`: the operator condensed onto a fixed stochastic
/// factor.
pub fn deterministic_matrix(op: &StochasticOperator, z: &[f64]) -> Result<CsrMatrix> {
    let coef: Vec<f64> = op.stochastic().iter().map(|g| g.bilinear(z, z)).collect();
    let terms: Vec<(f64, &CsrMatrix)> = coef.iter().copied().zip(op.spatial()).collect();
    CsrMatrix::linear_combination(&terms)
}

/// `Σ_l (yᵀ K_l y) G_l` as a dense matrix of order `n_ξ`.
pub fn stochastic_matrix(op: &StochasticOperator, y: &[f64]) -> Mat {
    let n = op.n_xi();
    let mut b = Mat::zeros(n, n);
    for (k, g) in op.spatial().iter().zip(op.stochastic()) {
        let c = k.bilinear(y, y);
        for (i, j, v) in g.triplets() {
            b[(i, j)] += c * v;
        }
    }
    b
}

/// `R z` where `mat(R) = mat(f) − Σ_l K_l Y Zᵀ G_lᵀ` is the current residual.
fn residual_times_z(op: &StochasticOperator, cur: &FactoredVector, z: &[f64]) -> Vec<f64> {
    let f = op.rhs();
    let mut out = f.y().mul_vec(&f.z().t_mul_vec(z));
    if cur.rank() > 0 {
        for (k, g) in op.spatial().iter().zip(op.stochastic()) {
            let c = cur.z().t_mul_vec(&g.t_mul_vec(z));
            let kv = k.mul_vec(&cur.y().mul_vec(&c));
            out.iter_mut().zip(&kv).for_each(|(o, v)| *o -= v);
        }
    }
    out
}

/// `Rᵀ y` for the same residual.
fn residual_t_times_y(op: &StochasticOperator, cur: &FactoredVector, y: &[f64]) -> Vec<f64> {
    let f = op.rhs();
    let mut out = f.z().mul_vec(&f.y().t_mul_vec(y));
    if cur.rank() > 0 {
        for (k, g) in op.spatial().iter().zip(op.stochastic()) {
            let c = cur.y().t_mul_vec(&k.t_mul_vec(y));
            let gv = g.mul_vec(&cur.z().mul_vec(&c));
            out.iter_mut().zip(&gv).for_each(|(o, v)| *o -= v);
        }
    }
    out
}

fn alternate(op: &StochasticOperator, cur: &FactoredVector, mut z: Vec<f64>, cfg: &AlternationConfig) -> Result<RankOne> {
    let mut y = vec![0.0; op.n_x()];
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut sweeps = 0;
    for _ in 0..cfg.max_sweeps.max(1) {
        sweeps += 1;
        let a = deterministic_matrix(op, &z)?;
        y = SparseFactor::new(&a)?.solve(&residual_times_z(op, cur, &z));
        let b = stochastic_matrix(op, &y);
        z = Lu::factor(&b)?.solve(&residual_t_times_y(op, cur, &y));
        let nz = norm2(&z);
        if !(nz > 0.0) || !nz.is_finite() || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("rank-one increment vanished".into()));
        }
        z.iter_mut().for_each(|v| *v /= nz);
        y.iter_mut().for_each(|v| *v *= nz);
        if let Some((py, pz)) = &prev {
            // ‖y zᵀ − py pzᵀ‖² expanded with unit-norm z and pz.
            let (yy, pp) = (dot(&y, &y), dot(py, py));
            let d2 = (yy + pp - 2.0 * dot(&y, py) * dot(&z, pz)).max(0.0);
            if sqrt(d2) < cfg.tol * sqrt(yy) {
                break;
            }
        }
        prev = Some((y.clone(), z.clone()));
    }
    Ok(RankOne { y, z, sweeps, restarts: 0 })
}

/// Finds the next pair `(y, z)` given the current approximation.
///
/// The alternation starts from `z = e_1`; a singular reduced system triggers a
/// restart from a random unit `z` drawn from `rng`.
pub fn enrich_rank_one<R: Rng>(
    op: &StochasticOperator,
    current: &FactoredVector,
    cfg: &AlternationConfig,
    rng: &mut R,
) -> Result<RankOne> {
    for attempt in 0..=cfg.max_restarts {
        let z0 = if attempt == 0 {
            let mut e = vec![0.0; op.n_xi()];
            e[0] = 1.0;
            e
        } else {
            let mut v: Vec<f64> = (0..op.n_xi()).map(|_| rng.random::<f64>() - 0.5).collect();
            let n = norm2(&v);
            v.iter_mut().for_each(|x| *x /= n);
            v
        };
        match alternate(op, current, z0, cfg) {
            Ok(mut p) => {
                p.restarts = attempt;
                return Ok(p);
            }
            Err(Error::Singular(_) | Error::Factorization(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::PgdBreakdown {
        restarts: cfg.max_restarts,
    })
}

#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    pub z: Mat,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Refits all stochastic factors for fixed spatial factors `Y`: solves the
/// coupled system `Σ_l G_l Z D_lᵀ = F_z F_yᵀ Y` with `D_l = Yᵀ K_l Y`.
///
/// CG is used when every `D_l` is symmetric, GMRES otherwise; both are
/// preconditioned by `X ↦ X D_0⁻ᵀ`. `z0` is the starting guess.
pub fn update_stochastic(op: &StochasticOperator, y: &Mat, z0: Option<&Mat>, tol: f64, max_iter: usize) -> Result<UpdateOutcome> {
    let kappa = y.cols();
    let nxi = op.n_xi();
    if kappa == 0 {
        return Err(Error::InvalidParameter("update needs at least one spatial factor".into()));
    }
    let d: Vec<Mat> = op.spatial().iter().map(|k| y.t_mul(&k.mul_dense(y))).collect();
    let f = op.rhs();
    let rhs = f.z().mul(&f.y().t_mul(y));

    let symmetric = op.stochastic().iter().all(|g| g.is_symmetric(1e-13))
        && d.iter().all(|m| m.sub(&m.transpose()).max_abs() <= 1e-12 * m.max_abs().max(f64::MIN_POSITIVE));
    let d0 = Lu::factor(&d[0]).ok();

    let apply = |x: &[f64], out: &mut [f64]| {
        let xm = Mat::from_col_major(nxi, kappa, x.to_vec());
        out.fill(0.0);
        for (g, dl) in op.stochastic().iter().zip(&d) {
            let t = g.mul_dense(&xm).mul_t(dl);
            out.iter_mut().zip(t.as_slice()).for_each(|(o, v)| *o += v);
        }
    };
    let precond = |r: &[f64], out: &mut [f64]| match &d0 {
        Some(lu) => {
            // Row i of X D_0⁻ᵀ solves D_0 s = (row i of X)ᵀ.
            let mut row = vec![0.0; kappa];
            for i in 0..nxi {
                for (j, rj) in row.iter_mut().enumerate() {
                    *rj = r[j * nxi + i];
                }
                let s = lu.solve(&row);
                for (j, sj) in s.iter().enumerate() {
                    out[j * nxi + i] = *sj;
                }
            }
        }
        None => out.copy_from_slice(r),
    };
    let x0 = z0.filter(|z| z.rows() == nxi && z.cols() == kappa).map(Mat::as_slice);
    let out = if symmetric {
        cg(apply, precond, rhs.as_slice(), x0, tol, max_iter)?
    } else {
        gmres(apply, precond, rhs.as_slice(), x0, 40, tol, max_iter)?
    };
    Ok(UpdateOutcome {
        z: Mat::from_col_major(nxi, kappa, out.x),
        iterations: out.iterations,
        rel_residual: out.rel_residual,
    })
}

/// Greedy PGD until the relative residual drops below `cfg.eps` or the rank
/// cap is reached.
pub fn solve_pgd(op: &StochasticOperator, cfg: &PgdConfig) -> Result<PgdSolution> {
    cfg.validate()?;
    let (nx, nxi) = (op.n_x(), op.n_xi());
    let fnorm = op.rhs().norm();
    if fnorm == 0.0 {
        return Ok(PgdSolution {
            factors: FactoredVector::zero(nx, nxi),
            kappa: 0,
            rel_residual: 0.0,
            zc: ProjectionBasis::new(Mat::zeros(nxi, 0))?,
            converged: true,
            history: Vec::new(),
            sweeps: 0,
            restarts: 0,
            updates: 0,
        });
    }
    let rel = |u: &FactoredVector| -> Result<f64> { Ok(op.residual_norm(u)? / fnorm) };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u = FactoredVector::zero(nx, nxi);
    let (mut history, mut sweeps, mut restarts, mut updates) = (Vec::new(), 0, 0, 0);
    let mut r = 1.0;
    let mut converged = false;

    for it in 1..=cfg.max_rank {
        let pair = enrich_rank_one(op, &u, &cfg.alternation, &mut rng)?;
        sweeps += pair.sweeps;
        restarts += pair.restarts;
        let (mut y, mut z) = u.into_factors();
        y.push_col(&pair.y);
        z.push_col(&pair.z);
        if let UpdatePolicy::Every(k) = cfg.update {
            if it % k == 0 {
                z = update_stochastic(op, &y, Some(&z), cfg.update_tol, cfg.update_max_iter)?.z;
                updates += 1;
            }
        }
        u = FactoredVector::new(y, z)?;
        if it == 1 || it % cfg.check_every == 0 || it == cfg.max_rank {
            r = rel(&u)?;
            history.push((it, r));
            if r < cfg.eps {
                converged = true;
                break;
            }
        }
    }

    if cfg.update != UpdatePolicy::Never && u.rank() > 0 {
        let upd = update_stochastic(op, u.y(), Some(u.z()), cfg.update_tol, cfg.update_max_iter)?;
        updates += 1;
        let cand = FactoredVector::new(u.y().clone(), upd.z)?;
        let rc = rel(&cand)?;
        // The refit is optimal in the energy norm only; keep it unless it
        // worsens the reported residual.
        if rc <= r {
            u = cand;
            r = rc;
        }
        converged = r < cfg.eps;
    }

    let kappa = u.rank();
    let zc = ProjectionBasis::new(truncate_svd(&u, SvdTarget::Rank(kappa)).into_factors().1)?;
    Ok(PgdSolution {
        factors: u,
        kappa,
        rel_residual: r,
        zc,
        converged,
        history,
        sweeps,
        restarts,
        updates,
    })
}

/// Moves known Dirichlet data to the right-hand side: `f ↦ f − A(g_0 ⊗ u_bc)`,
/// i.e. subtracts `Σ_l (G_l g_0) ⊗ (A_l^{IB} g_D)`.
pub fn handle_nonhomogeneous_bc(op: &StochasticOperator, lift: &BoundaryLift) -> Result<StochasticOperator> {
    if lift.is_zero() {
        return Ok(op.clone());
    }
    if lift.term_vectors.len() != op.n_terms() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "lift has {} terms, operator has {}",
            lift.term_vectors.len(),
            op.n_terms()
        )));
    }
    let mut e1 = vec![0.0; op.n_xi()];
    e1[0] = 1.0;
    let cols: Vec<&[f64]> = lift.term_vectors.iter().map(Vec::as_slice).collect();
    let gz: Vec<Vec<f64>> = op.stochastic().iter().map(|g| g.mul_vec(&e1)).collect();
    let gzr: Vec<&[f64]> = gz.iter().map(Vec::as_slice).collect();
    let lifted = FactoredVector::new(Mat::from_columns(op.n_x(), &cols), Mat::from_columns(op.n_xi(), &gzr))?;
    op.with_rhs(op.rhs().add_scaled(-1.0, &lifted)?)
}

/// Solution on all grid nodes: interior rows from `u`, plus the lift
/// `g_D ⊗ g_0` on the boundary rows.
pub fn reconstruct_full(spatial: &SpatialMatrices, n_nodes: usize, u: &FactoredVector) -> Result<FactoredVector> {
    if u.n_x() != spatial.interior_nodes.len() {
        return Err(Error::DimensionMismatch("solution does not match the interior nodes".into()));
    }
    let mut y = Mat::zeros(n_nodes, u.rank());
    for (r, &node) in spatial.interior_nodes.iter().enumerate() {
        for c in 0..u.rank() {
            y[(node, c)] = u.y()[(r, c)];
        }
    }
    let full = FactoredVector::new(y, u.z().clone())?;
    match &spatial.lift {
        Some(lift) if !lift.is_zero() => {
            let mut g = vec![0.0; n_nodes];
            for (&b, &v) in lift.boundary_nodes.iter().zip(&lift.values) {
                g[b] = v;
            }
            let mut e1 = vec![0.0; u.n_xi()];
            e1[0] = 1.0;
            full.add(&FactoredVector::rank_one(&g, &e1))
        }
        _ => Ok(full),
    }
}

/// Mean field `E[u](x) = Y Zᵀ e_1` (the first chaos coefficient).
pub fn mean_field(u: &FactoredVector) -> Vec<f64> {
    let w: Vec<f64> = (0..u.rank()).map(|c| u.z()[(0, c)]).collect();
    u.y().mul_vec(&w)
}
