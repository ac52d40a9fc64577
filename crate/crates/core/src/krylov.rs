//! Restarted low-rank projection method with right mean-based
//! preconditioning, and the two-grid driver that feeds it a stochastic basis
//! from a coarse PGD solve.

use alloc::format;
use alloc::vec::Vec;

use crate::chaos::{SpectralBasis, StochasticMatrices};
use crate::dense::{solve_complete_pivot, Mat};
use crate::fem::{
    assemble_convection_diffusion, assemble_diffusion, auto_stretch_ratio, make_grid, recommend_coarse_level, Grid,
    PecletData, ProblemKind, SpatialMatrices, Stretch,
};
use crate::lowrank::{inner, FactoredVector, ProjectionBasis, StochasticOperator, SvdTarget, Truncation};
use crate::pgd::{handle_nonhomogeneous_bc, solve_pgd, PgdConfig, PgdSolution};
use crate::randfield::{build_kl, ExponentialCovariance, KLExpansion, KlTruncation, Rect};
use crate::sparse::SparseFactor;
use crate::{Error, Result};

/// Source of wall-clock time in seconds. The core crate has no clock of its
/// own; callers with `std` plug one in.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    /// Exact factorization of the mean operator term.
    MeanExact,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Inner iterations per cycle.
    pub m: usize,
    pub eps: f64,
    pub trunc: Truncation,
    pub max_cycles: usize,
    pub preconditioner: PreconditionerKind,
}

impl SolverConfig {
    pub fn new(m: usize, eps: f64, trunc: Truncation) -> Self {
        Self {
            m,
            eps,
            trunc,
            max_cycles: 50,
            preconditioner: PreconditionerKind::MeanExact,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("restart length m must be >= 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    /// The basis Gram system lost rank at inner step `step`; the cycle went on
    /// with `kept` basis vectors.
    GramRankDeficient { cycle: usize, step: usize, kept: usize },
    /// The least-squares system for the update coefficients was singular.
    UpdateRankDeficient { cycle: usize, rank: usize, size: usize },
    /// The true residual grew from one cycle to the next, which points to a
    /// truncation rank that is too small.
    ResidualIncrease { cycle: usize, from: f64, to: f64 },
    /// The truncated residual vanished, so no search direction exists.
    EmptyDirection { cycle: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub cycles: usize,
    pub matvecs: usize,
    /// True relative residual before every cycle and at exit.
    pub residual_history: Vec<f64>,
    pub final_rank: usize,
    pub converged: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub setup_seconds: f64,
    pub iterate_seconds: f64,
}

/// `M⁻¹ = I ⊗ K̃_0⁻¹`, applied to the spatial factor only.
#[derive(Clone, Debug)]
pub struct MeanPreconditioner {
    factor: SparseFactor,
}

impl MeanPreconditioner {
    /// Factors the first operator term (for convection-diffusion this already
    /// contains the convection and streamline matrices).
    pub fn new(op: &StochasticOperator) -> Result<Self> {
        Ok(Self {
            factor: SparseFactor::new(&op.spatial()[0])?,
        })
    }

    pub fn apply_inverse(&self, u: &FactoredVector) -> FactoredVector {
        u.map_y(|y| self.factor.solve_mat(y))
    }
}

/// `A M⁻¹ u`; with no preconditioner this is just `A u`.
pub fn apply_preconditioned(
    op: &StochasticOperator,
    pre: Option<&MeanPreconditioner>,
    u: &FactoredVector,
) -> Result<FactoredVector> {
    match pre {
        Some(p) => op.apply(&p.apply_inverse(u)),
        None => op.apply(u),
    }
}

fn gram(vs: &[FactoredVector]) -> Result<Mat> {
    let n = vs.len();
    let mut g = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = inner(&vs[i], &vs[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

fn combine(base: &FactoredVector, coef: &[f64], vs: &[FactoredVector]) -> Result<FactoredVector> {
    let mut terms: Vec<(f64, &FactoredVector)> = Vec::with_capacity(vs.len() + 1);
    terms.push((1.0, base));
    terms.extend(coef.iter().copied().zip(vs));
    FactoredVector::combination(base.n_x(), base.n_xi(), &terms)
}

const GRAM_TOL: f64 = 1e-12;
/// Relative size below which a new direction counts as lying in the span
/// of the previous ones (Krylov breakdown).
const BREAKDOWN_TOL: f64 = 1e-12;

/// Restarted low-rank projection for `A u = f`, iterating on `û = M u`.
///
/// `u0` is an initial guess for `u` itself (not `û`).
pub fn solve(
    op: &StochasticOperator,
    cfg: &SolverConfig,
    u0: Option<&FactoredVector>,
    clock: &dyn Clock,
) -> Result<(FactoredVector, SolveReport)> {
    cfg.validate()?;
    let t0 = clock.now();
    let pre = match cfg.preconditioner {
        PreconditionerKind::MeanExact => Some(MeanPreconditioner::new(op)?),
        PreconditionerKind::None => None,
    };
    let t1 = clock.now();
    let mut report = SolveReport {
        setup_seconds: t1 - t0,
        ..SolveReport::default()
    };
    let (nx, nxi) = (op.n_x(), op.n_xi());
    let f = op.rhs();
    let fnorm = f.norm();
    let to_u = |uh: &FactoredVector| match &pre {
        Some(p) => p.apply_inverse(uh),
        None => uh.clone(),
    };

    let mut uh = match u0 {
        Some(u) if u.n_x() != nx || u.n_xi() != nxi => {
            return Err(Error::DimensionMismatch("initial guess has the wrong size".into()));
        }
        Some(u) if pre.is_some() => u.map_y(|y| op.spatial()[0].mul_dense(y)),
        Some(u) => u.clone(),
        None => FactoredVector::zero(nx, nxi),
    };
    if fnorm == 0.0 {
        report.converged = true;
        report.residual_history.push(0.0);
        report.iterate_seconds = clock.now() - t1;
        return Ok((FactoredVector::zero(nx, nxi), report));
    }

    let mut cycle = 0;
    loop {
        let u = to_u(&uh);
        let r = op.residual(&u)?.compress_exact();
        let rn = r.norm() / fnorm;
        if let Some(&last) = report.residual_history.last() {
            if rn > last {
                report.diagnostics.push(Diagnostic::ResidualIncrease {
                    cycle,
                    from: last,
                    to: rn,
                });
            }
        }
        report.residual_history.push(rn);
        if rn < cfg.eps || cycle >= cfg.max_cycles {
            report.converged = rn < cfg.eps;
            report.cycles = cycle;
            report.final_rank = u.rank();
            report.iterate_seconds = clock.now() - t1;
            return Ok((u, report));
        }

        let v1 = cfg.trunc.apply(&r)?;
        let n1 = v1.norm();
        if n1 == 0.0 {
            report.diagnostics.push(Diagnostic::EmptyDirection { cycle });
            report.cycles = cycle;
            report.final_rank = u.rank();
            report.iterate_seconds = clock.now() - t1;
            return Ok((u, report));
        }
        let mut vs = alloc::vec![v1.scaled(1.0 / n1)];
        let mut ws: Vec<FactoredVector> = Vec::with_capacity(cfg.m);
        for j in 0..cfg.m {
            let w = apply_preconditioned(op, pre.as_ref(), &vs[j])?.compress_exact();
            report.matvecs += 1;
            ws.push(w);
            if j + 1 == cfg.m {
                break;
            }
            let w = &ws[j];
            let g = gram(&vs)?;
            let rhs: Vec<f64> = vs.iter().map(|v| inner(v, w)).collect::<Result<_>>()?;
            let (alpha, rank) = solve_complete_pivot(&g, &rhs, GRAM_TOL);
            if rank < vs.len() {
                // The newest direction depends on the earlier ones.
                vs.pop();
                ws.pop();
                report.diagnostics.push(Diagnostic::GramRankDeficient {
                    cycle,
                    step: j,
                    kept: vs.len(),
                });
                break;
            }
            let neg: Vec<f64> = alpha.iter().map(|a| -a).collect();
            let t = cfg.trunc.apply(&combine(w, &neg, &vs)?)?;
            let nt = t.norm();
            if !(nt > BREAKDOWN_TOL * w.norm()) {
                break;
            }
            vs.push(t.scaled(1.0 / nt));
        }
        vs.truncate(ws.len());

        let g = gram(&ws)?;
        let rhs: Vec<f64> = ws.iter().map(|w| inner(w, &r)).collect::<Result<_>>()?;
        let (beta, rank) = solve_complete_pivot(&g, &rhs, GRAM_TOL);
        if rank < ws.len() {
            report.diagnostics.push(Diagnostic::UpdateRankDeficient {
                cycle,
                rank,
                size: ws.len(),
            });
        }
        uh = cfg.trunc.apply(&combine(&uh, &beta, &vs)?)?;
        cycle += 1;
    }
}

/// Governing equation of a benchmark problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Physics {
    /// `−∇·(a∇u) = 1`, `u = 0` on the boundary.
    Diffusion,
    /// `−ν∇·(a∇u) + w·∇u = 0` with the benchmark's Dirichlet data.
    ConvectionDiffusion {
        nu: f64,
        wind: (f64, f64),
        stretch: StretchRule,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StretchRule {
    None,
    /// Per-level ratio from [`auto_stretch_ratio`].
    Auto,
    Ratio(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LevelChoice {
    Fixed(usize),
    Auto { points_per_halfwave: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationKind {
    /// Projection onto the coarse PGD stochastic basis.
    Multilevel,
    /// Best rank-κ approximation with κ taken from the coarse solve.
    Svd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub physics: Physics,
    pub domain: Rect,
    pub sigma: f64,
    pub corr_len: f64,
    pub mean: f64,
    pub kl: KlTruncation,
    pub degree: usize,
    pub coarse_level: LevelChoice,
    pub fine_level: usize,
}

#[derive(Clone, Debug)]
pub struct StochasticSetup {
    pub kl: KLExpansion,
    pub basis: SpectralBasis,
    pub matrices: StochasticMatrices,
    pub coarse_level: usize,
}

impl StochasticSetup {
    pub fn n_xi(&self) -> usize {
        self.basis.len()
    }
}

/// KL expansion, chaos basis and the resolved coarse level.
pub fn prepare(problem: &Problem) -> Result<StochasticSetup> {
    let cov = ExponentialCovariance::new(problem.sigma, problem.corr_len, problem.domain)?;
    let kl = build_kl(&cov, problem.mean, problem.kl)?;
    let basis = SpectralBasis::total_degree(kl.len(), problem.degree)?;
    let matrices = basis.stochastic_matrices();
    let coarse_level = match problem.coarse_level {
        LevelChoice::Fixed(l) => l,
        LevelChoice::Auto { points_per_halfwave } => {
            if !(points_per_halfwave > 0.0) {
                return Err(Error::InvalidParameter("points per half wave must be > 0".into()));
            }
            let kind = match problem.physics {
                Physics::Diffusion => ProblemKind::Diffusion,
                Physics::ConvectionDiffusion { nu, stretch, .. } => ProblemKind::ConvectionDiffusion {
                    nu,
                    stretched: stretch != StretchRule::None,
                },
            };
            recommend_coarse_level(&kl, points_per_halfwave, kind)
        }
    };
    Ok(StochasticSetup {
        kl,
        basis,
        matrices,
        coarse_level,
    })
}

/// Grid, spatial matrices and the lifted stochastic operator on one level.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub grid: Grid,
    pub spatial: SpatialMatrices,
    pub op: StochasticOperator,
    pub peclet: Option<PecletData>,
}

pub fn discretize(problem: &Problem, setup: &StochasticSetup, level: usize) -> Result<Discretization> {
    match problem.physics {
        Physics::Diffusion => {
            let grid = make_grid(level, problem.domain, Stretch::Uniform)?;
            let spatial = assemble_diffusion(&grid, &setup.kl)?;
            let op = StochasticOperator::from_assembly(&spatial, &setup.matrices)?;
            Ok(Discretization {
                grid,
                spatial,
                op,
                peclet: None,
            })
        }
        Physics::ConvectionDiffusion { nu, wind, stretch } => {
            let stretch = match stretch {
                StretchRule::None => Stretch::Uniform,
                StretchRule::Ratio(r) => Stretch::Geometric(r),
                StretchRule::Auto => auto_stretch_ratio(level, problem.domain.height(), nu)
                    .map_or(Stretch::Uniform, Stretch::Geometric),
            };
            let grid = make_grid(level, problem.domain, stretch)?;
            let (spatial, pec) = assemble_convection_diffusion(&grid, &setup.kl, nu, wind)?;
            let mut op = StochasticOperator::from_assembly(&spatial, &setup.matrices)?;
            if let Some(lift) = &spatial.lift {
                op = handle_nonhomogeneous_bc(&op, lift)?;
            }
            Ok(Discretization {
                grid,
                spatial,
                op,
                peclet: Some(pec),
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub eps: f64,
    pub m: usize,
    pub max_cycles: usize,
    pub truncation: TruncationKind,
    pub preconditioner: PreconditionerKind,
    /// `eps` is overwritten by [`PipelineConfig::eps`].
    pub pgd: PgdConfig,
}

impl PipelineConfig {
    pub fn pgd_config(&self) -> PgdConfig {
        PgdConfig { eps: self.eps, ..self.pgd }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub coarse: f64,
    pub setup: f64,
    pub fine: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub setup: StochasticSetup,
    /// Absent when a precomputed basis was supplied.
    pub coarse: Option<PgdSolution>,
    pub fine: Discretization,
    /// Interior-node solution (homogeneous part for lifted problems).
    pub solution: FactoredVector,
    pub report: SolveReport,
    pub times: PhaseTimes,
}

/// Coarse assembly and PGD solve.
pub fn coarse_solve(problem: &Problem, setup: &StochasticSetup, pgd: &PgdConfig) -> Result<(Discretization, PgdSolution)> {
    let d = discretize(problem, setup, setup.coarse_level)?;
    let sol = solve_pgd(&d.op, pgd)?;
    Ok((d, sol))
}

/// Coarse PGD, truncation from its stochastic basis, fine assembly and the
/// preconditioned low-rank solve.
pub fn pipeline(problem: &Problem, cfg: &PipelineConfig, clock: &dyn Clock) -> Result<PipelineResult> {
    pipeline_with_basis(problem, cfg, None, clock)
}

/// As [`pipeline`], but a supplied basis replaces the coarse solve for the
/// multilevel truncation.
pub fn pipeline_with_basis(
    problem: &Problem,
    cfg: &PipelineConfig,
    basis: Option<ProjectionBasis>,
    clock: &dyn Clock,
) -> Result<PipelineResult> {
    let t0 = clock.now();
    let setup = prepare(problem)?;
    if problem.fine_level < setup.coarse_level {
        return Err(Error::InvalidParameter(format!(
            "fine level {} is below the coarse level {}",
            problem.fine_level, setup.coarse_level
        )));
    }
    let (coarse, trunc) = match (basis, cfg.truncation) {
        (Some(b), TruncationKind::Multilevel) => {
            if b.zc().rows() != setup.n_xi() {
                return Err(Error::DimensionMismatch(format!(
                    "basis has {} rows, the chaos basis has {} functions",
                    b.zc().rows(),
                    setup.n_xi()
                )));
            }
            (None, Truncation::Projection(b))
        }
        (_, kind) => {
            let (_, sol) = coarse_solve(problem, &setup, &cfg.pgd_config())?;
            let trunc = match kind {
                TruncationKind::Multilevel => Truncation::Projection(sol.zc.clone()),
                TruncationKind::Svd => Truncation::Svd(SvdTarget::Rank(sol.kappa)),
            };
            (Some(sol), trunc)
        }
    };
    let t1 = clock.now();
    let fine = discretize(problem, &setup, problem.fine_level)?;
    let t2 = clock.now();
    let scfg = SolverConfig {
        m: cfg.m,
        eps: cfg.eps,
        trunc,
        max_cycles: cfg.max_cycles,
        preconditioner: cfg.preconditioner,
    };
    let (solution, report) = solve(&fine.op, &scfg, None, clock)?;
    let times = PhaseTimes {
        coarse: t1 - t0,
        setup: t2 - t1 + report.setup_seconds,
        fine: report.iterate_seconds,
    };
    Ok(PipelineResult {
        setup,
        coarse,
        fine,
        solution,
        report,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_op(sigma: f64) -> StochasticOperator {
        let problem = Problem {
            physics: Physics::Diffusion,
            domain: Rect::UNIT,
            sigma,
            corr_len: 4.0,
            mean: 1.0,
            kl: KlTruncation::Terms(2),
            degree: 2,
            coarse_level: LevelChoice::Fixed(2),
            fine_level: 3,
        };
        let setup = prepare(&problem).unwrap();
        discretize(&problem, &setup, 3).unwrap().op
    }

    #[test]
    fn exact_preconditioner_on_mean_problem() {
        let op = small_op(0.0);
        let cfg = SolverConfig {
            m: 1,
            ..SolverConfig::new(1, 1e-12, Truncation::None)
        };
        let (u, rep) = solve(&op, &cfg, None, &NoClock).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.cycles, 1);
        assert!(op.relative_residual(&u).unwrap() < 1e-12);
    }

    #[test]
    fn exact_guess_exits_immediately() {
        let op = small_op(0.0);
        let cfg = SolverConfig::new(4, 1e-10, Truncation::None);
        let (u, _) = solve(&op, &cfg, None, &NoClock).unwrap();
        let (_, rep) = solve(&op, &cfg, Some(&u), &NoClock).unwrap();
        assert_eq!(rep.cycles, 0);
        assert_eq!(rep.matvecs, 0);
    }

    #[test]
    fn preconditioning_keeps_rank() {
        let op = small_op(0.1);
        let pre = MeanPreconditioner::new(&op).unwrap();
        let y = Mat::from_fn(op.n_x(), 2, |i, j| (i + 3 * j) as f64);
        let z = Mat::from_fn(op.n_xi(), 2, |i, j| (i * j) as f64 + 1.0);
        let u = FactoredVector::new(y, z).unwrap();
        assert_eq!(pre.apply_inverse(&u).rank(), 2);
        assert_eq!(apply_preconditioned(&op, Some(&pre), &u).unwrap().rank(), 2 * op.n_terms());
    }

    #[test]
    fn invalid_config_rejected() {
        let op = small_op(0.1);
        let cfg = SolverConfig::new(0, 1e-5, Truncation::None);
        assert!(solve(&op, &cfg, None, &NoClock).is_err());
        let cfg = SolverConfig::new(3, 0.0, Truncation::None);
        assert!(solve(&op, &cfg, None, &NoClock).is_err());
    }

    #[test]
    fn unpreconditioned_solve_converges_without_truncation() {
        let op = small_op(0.2);
        let mut cfg = SolverConfig::new(40, 1e-10, Truncation::None);
        cfg.preconditioner = PreconditionerKind::None;
        let (u, rep) = solve(&op, &cfg, None, &NoClock).unwrap();
        assert!(rep.converged, "{:?}", rep.residual_history);
        assert!(op.relative_residual(&u).unwrap() < 1e-10);
    }
}
