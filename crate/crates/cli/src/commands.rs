//! The four subcommands. Each returns a report and leaves its files in the
//! configured output directory; invalid input is rejected before anything is
//! written.

use std::path::Path;

use lrsg_core::krylov::{
    coarse_solve, discretize, pipeline_with_basis, prepare, solve, Clock, Discretization, SolverConfig,
    StochasticSetup, TruncationKind,
};
use lrsg_core::lowrank::{SvdTarget, Truncation};
use lrsg_core::pgd::{mean_field, reconstruct_full, solve_pgd, PgdSolution};

use crate::config::{ExperimentConfig, Variant};
use crate::io;
use crate::report::{ErrorInfo, PgdSummary, ProblemSummary, Report, SolveSummary, Status, Timings, VariantResult};
use crate::CliError;

fn stage_error(e: lrsg_core::Error) -> CliError {
    match e {
        lrsg_core::Error::Stagnation { .. } | lrsg_core::Error::PgdBreakdown { .. } => CliError::NotConverged(e),
        e => CliError::Core(e),
    }
}

/// Checks that need the KL expansion and basis but produce no output.
fn preflight(cfg: &ExperimentConfig) -> Result<StochasticSetup, CliError> {
    let setup = prepare(&cfg.problem()).map_err(CliError::Input)?;
    if cfg.fine_level < setup.coarse_level {
        return Err(CliError::Input(lrsg_core::Error::InvalidParameter(format!(
            "fine level {} is below the coarse level {}",
            cfg.fine_level, setup.coarse_level
        ))));
    }
    Ok(setup)
}

/// Writes the report for a stage failure and hands the error back.
fn fail(mut report: Report, dir: &Path, err: CliError) -> CliError {
    report.status = Status::Error;
    report.error = Some(ErrorInfo {
        kind: err.kind().into(),
        message: err.to_string(),
    });
    match report.write_files(dir) {
        Ok(()) => CliError::Reported(Box::new(report), Box::new(err)),
        Err(io) => CliError::Io(io),
    }
}

fn write_solution(dir: &Path, cfg: &ExperimentConfig, fine: &Discretization, u: &lrsg_core::lowrank::FactoredVector) -> Result<(), CliError> {
    let full = reconstruct_full(&fine.spatial, fine.grid.n_nodes(), u).map_err(CliError::Core)?;
    io::write_factors(&dir.join("solution.lrfv"), &full)?;
    if cfg.dump_field {
        let points: Vec<(f64, f64)> = (0..fine.grid.n_nodes()).map(|k| fine.grid.node_xy(k)).collect();
        io::write_field_csv(&dir.join("field.csv"), &points, &mean_field(&full))?;
    }
    Ok(())
}

/// Coarse PGD, multilevel or SVD truncation, preconditioned fine solve.
pub fn run(cfg: &ExperimentConfig, coarse_basis: Option<&Path>, clock: &dyn Clock) -> Result<Report, CliError> {
    let setup = preflight(cfg)?;
    let basis = match coarse_basis {
        Some(path) => {
            let b = io::read_basis(path).map_err(CliError::BasisFile)?;
            if b.zc().rows() != setup.n_xi() {
                return Err(CliError::Input(lrsg_core::Error::DimensionMismatch(format!(
                    "basis has {} rows, the chaos basis has {} functions",
                    b.zc().rows(),
                    setup.n_xi()
                ))));
            }
            Some(b)
        }
        None => None,
    };
    let dir = cfg.out_dir.as_path();
    let mut report = Report::new("run", cfg);
    let mut pcfg = cfg.pipeline();
    if basis.is_some() {
        pcfg.truncation = TruncationKind::Multilevel;
    }
    let res = match pipeline_with_basis(&cfg.problem(), &pcfg, basis, clock) {
        Ok(r) => r,
        Err(e) => return Err(fail(report, dir, stage_error(e))),
    };
    report.problem = Some(ProblemSummary::new(&res.setup, cfg.fine_level, res.fine.op.n_x()));
    report.coarse = res.coarse.as_ref().map(|c| PgdSummary::new(res.setup.coarse_level, c));
    report.solve = Some(SolveSummary::new(&res.report));
    report.timings = res.times.into();
    report.status = if res.report.converged { Status::Ok } else { Status::NotConverged };
    report.write_files(dir)?;
    if let Some(c) = &res.coarse {
        io::write_basis(&dir.join("zc.lrfv"), &c.zc)?;
    }
    write_solution(dir, cfg, &res.fine, &res.solution)?;
    Ok(report)
}

/// The coarse PGD solve alone; writes its factors and stochastic basis.
pub fn coarse_only(cfg: &ExperimentConfig, clock: &dyn Clock) -> Result<Report, CliError> {
    let setup = preflight(cfg)?;
    let dir = cfg.out_dir.as_path();
    let mut report = Report::new("coarse-only", cfg);
    let t0 = clock.now();
    let (coarse, sol) = match coarse_solve(&cfg.problem(), &setup, &cfg.pgd()) {
        Ok(r) => r,
        Err(e) => return Err(fail(report, dir, stage_error(e))),
    };
    let mut summary = ProblemSummary::new(&setup, setup.coarse_level, coarse.op.n_x());
    summary.fine_level = setup.coarse_level;
    report.problem = Some(summary);
    report.coarse = Some(PgdSummary::new(setup.coarse_level, &sol));
    report.timings = Timings {
        coarse: clock.now() - t0,
        total: clock.now() - t0,
        ..Timings::default()
    };
    report.status = if sol.converged { Status::Ok } else { Status::NotConverged };
    report.write_files(dir)?;
    io::write_basis(&dir.join("zc.lrfv"), &sol.zc)?;
    let full = reconstruct_full(&coarse.spatial, coarse.grid.n_nodes(), &sol.factors).map_err(CliError::Core)?;
    io::write_factors(&dir.join("coarse.lrfv"), &full)?;
    Ok(report)
}

/// Spatial and stochastic matrices of one level in Matrix Market form,
/// `K_l.mtx` (after boundary elimination), `G_l.mtx`, and the right-hand
/// side as `rhs.lrfv`.
pub fn export_matrices(cfg: &ExperimentConfig, level: Option<usize>, _clock: &dyn Clock) -> Result<Report, CliError> {
    let setup = preflight(cfg)?;
    let level = level.unwrap_or(cfg.fine_level);
    if !(1..=12).contains(&level) {
        return Err(CliError::Input(lrsg_core::Error::InvalidParameter(format!(
            "level must lie in 1..=12, got {level}"
        ))));
    }
    let dir = cfg.out_dir.as_path();
    let mut report = Report::new("export-matrices", cfg);
    let d = match discretize(&cfg.problem(), &setup, level) {
        Ok(d) => d,
        Err(e) => return Err(fail(report, dir, stage_error(e))),
    };
    let mut summary = ProblemSummary::new(&setup, level, d.op.n_x());
    summary.fine_level = level;
    report.problem = Some(summary);
    report.write_files(dir)?;
    for (l, k) in d.op.spatial().iter().enumerate() {
        io::write_matrix_market(&dir.join(format!("K_{l}.mtx")), k)?;
    }
    for (l, g) in d.op.stochastic().iter().enumerate() {
        io::write_matrix_market(&dir.join(format!("G_{l}.mtx")), g)?;
    }
    io::write_factors(&dir.join("rhs.lrfv"), d.op.rhs())?;
    io::write_matrix_market_vector(&dir.join("nodes.mtx"), &d.spatial.interior_nodes.iter().map(|&n| n as f64).collect::<Vec<_>>())?;
    Ok(report)
}

fn lrp_variant(
    variant: Variant,
    fine: &Discretization,
    coarse: &PgdSolution,
    cfg: &ExperimentConfig,
    clock: &dyn Clock,
) -> (VariantResult, Option<lrsg_core::lowrank::FactoredVector>) {
    let trunc = match variant {
        Variant::LrpMultilevel => Truncation::Projection(coarse.zc.clone()),
        _ => Truncation::Svd(SvdTarget::Rank(coarse.kappa)),
    };
    let pcfg = cfg.pipeline();
    let scfg = SolverConfig {
        m: pcfg.m,
        eps: pcfg.eps,
        trunc,
        max_cycles: pcfg.max_cycles,
        preconditioner: pcfg.preconditioner,
    };
    match solve(&fine.op, &scfg, None, clock) {
        Ok((u, r)) => {
            let s = SolveSummary::new(&r);
            (
                VariantResult {
                    variant: variant.name().into(),
                    status: if r.converged { Status::Ok } else { Status::NotConverged },
                    kappa: Some(r.final_rank),
                    cycles: Some(r.cycles),
                    matvecs: Some(r.matvecs),
                    rel_residual: Some(s.rel_residual),
                    converged: r.converged,
                    timings: Timings {
                        setup: r.setup_seconds,
                        fine: r.iterate_seconds,
                        total: r.setup_seconds + r.iterate_seconds,
                        ..Timings::default()
                    },
                    error: None,
                },
                Some(u),
            )
        }
        Err(e) => (failed_variant(variant, &stage_error(e)), None),
    }
}

fn failed_variant(variant: Variant, err: &CliError) -> VariantResult {
    VariantResult {
        variant: variant.name().into(),
        status: Status::Error,
        kappa: None,
        cycles: None,
        matvecs: None,
        rel_residual: None,
        converged: false,
        timings: Timings::default(),
        error: Some(err.to_string()),
    }
}

/// Runs every configured variant on the same problem; the coarse solve and
/// fine assembly are shared. A failing variant is recorded and the others
/// still run.
pub fn compare(cfg: &ExperimentConfig, clock: &dyn Clock) -> Result<Report, CliError> {
    let setup = preflight(cfg)?;
    let dir = cfg.out_dir.as_path();
    let problem = cfg.problem();
    let mut report = Report::new("compare", cfg);

    let needs_coarse = cfg.variants.iter().any(|v| *v != Variant::PgdDirect);
    let t0 = clock.now();
    let coarse = if needs_coarse {
        Some(coarse_solve(&problem, &setup, &cfg.pgd()).map(|(_, s)| s))
    } else {
        None
    };
    let t1 = clock.now();
    let fine = match discretize(&problem, &setup, cfg.fine_level) {
        Ok(d) => d,
        Err(e) => return Err(fail(report, dir, stage_error(e))),
    };
    let t2 = clock.now();
    report.problem = Some(ProblemSummary::new(&setup, cfg.fine_level, fine.op.n_x()));
    if let Some(Ok(c)) = &coarse {
        report.coarse = Some(PgdSummary::new(setup.coarse_level, c));
    }
    report.timings = Timings {
        coarse: t1 - t0,
        setup: t2 - t1,
        ..Timings::default()
    };

    for &variant in &cfg.variants {
        let row = match variant {
            Variant::PgdDirect => {
                let s0 = clock.now();
                match solve_pgd(&fine.op, &cfg.pgd()) {
                    Ok(sol) => {
                        let secs = clock.now() - s0;
                        VariantResult {
                            variant: variant.name().into(),
                            status: if sol.converged { Status::Ok } else { Status::NotConverged },
                            kappa: Some(sol.kappa),
                            cycles: None,
                            matvecs: None,
                            rel_residual: Some(sol.rel_residual),
                            converged: sol.converged,
                            timings: Timings {
                                fine: secs,
                                total: secs,
                                ..Timings::default()
                            },
                            error: None,
                        }
                    }
                    Err(e) => failed_variant(variant, &stage_error(e)),
                }
            }
            _ => match coarse.as_ref().expect("coarse solve requested") {
                Ok(c) => {
                    let (mut row, _) = lrp_variant(variant, &fine, c, cfg, clock);
                    row.timings.coarse = t1 - t0;
                    row.timings.setup += t2 - t1;
                    row.timings.total += t2 - t0;
                    row
                }
                Err(e) => failed_variant(variant, &stage_error(e.clone())),
            },
        };
        report.variants.push(row);
    }
    report.timings.fine = report.variants.iter().map(|v| v.timings.fine).sum();
    report.timings.total = report.timings.coarse + report.timings.setup + report.timings.fine;
    report.status = if report.variants.iter().any(|v| v.status == Status::Error) {
        Status::Error
    } else if report.variants.iter().all(|v| v.converged) {
        Status::Ok
    } else {
        Status::NotConverged
    };
    report.write_files(dir)?;
    Ok(report)
}
