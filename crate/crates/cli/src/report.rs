//! Machine-readable run reports. The JSON layout is described by
//! `schemas/report.schema.json`; bump [`SCHEMA_VERSION`] when it changes.

use std::io::Write;
use std::path::Path;

use lrsg_core::krylov::{Diagnostic, PhaseTimes, SolveReport, StochasticSetup};
use lrsg_core::pgd::PgdSolution;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NotConverged,
    Error,
}

/// Problem sizes. `n_x` counts every grid node, `(2^ℓ + 1)²`, so that
/// `dof = n_x · n_xi`; `n_x_interior` is the size of the solved system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub m: usize,
    pub n_xi: usize,
    pub coarse_level: usize,
    pub fine_level: usize,
    pub n_x: usize,
    pub n_x_interior: usize,
    pub dof: usize,
    pub capture_ratio: f64,
    pub theta_max: f64,
    pub half_wavelength: f64,
}

/// Nodal count per side squared.
pub fn nodal_count(level: usize) -> usize {
    let side = (1usize << level) + 1;
    side * side
}

pub fn dof_count(level: usize, n_xi: usize) -> usize {
    nodal_count(level) * n_xi
}

impl ProblemSummary {
    pub fn new(setup: &StochasticSetup, fine_level: usize, n_x_interior: usize) -> Self {
        let (theta_max, half) = setup.kl.max_theta_and_halfwave();
        Self {
            m: setup.kl.len(),
            n_xi: setup.n_xi(),
            coarse_level: setup.coarse_level,
            fine_level,
            n_x: nodal_count(fine_level),
            n_x_interior,
            dof: dof_count(fine_level, setup.n_xi()),
            capture_ratio: setup.kl.capture_ratio,
            theta_max,
            half_wavelength: if half.is_finite() { half } else { 0.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub rank: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgdSummary {
    pub level: usize,
    pub kappa: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub history: Vec<HistoryPoint>,
    pub sweeps: usize,
    pub restarts: usize,
    pub updates: usize,
}

impl PgdSummary {
    pub fn new(level: usize, s: &PgdSolution) -> Self {
        Self {
            level,
            kappa: s.kappa,
            rel_residual: s.rel_residual,
            converged: s.converged,
            history: s
                .history
                .iter()
                .map(|&(rank, residual)| HistoryPoint { rank, residual })
                .collect(),
            sweeps: s.sweeps,
            restarts: s.restarts,
            updates: s.updates,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub cycles: usize,
    pub matvecs: usize,
    pub final_rank: usize,
    pub converged: bool,
    /// True relative residual `‖f − A u‖ / ‖f‖` of the returned iterate.
    pub rel_residual: f64,
    pub residual_history: Vec<f64>,
    pub diagnostics: Vec<String>,
}

fn describe(d: &Diagnostic) -> String {
    match d {
        Diagnostic::GramRankDeficient { cycle, step, kept } => {
            format!("cycle {cycle}: Gram system rank deficient at step {step}, kept {kept} directions")
        }
        Diagnostic::UpdateRankDeficient { cycle, rank, size } => {
            format!("cycle {cycle}: update system has rank {rank} of {size}")
        }
        Diagnostic::ResidualIncrease { cycle, from, to } => {
            format!("cycle {cycle}: residual increased from {from:e} to {to:e}")
        }
        Diagnostic::EmptyDirection { cycle } => format!("cycle {cycle}: truncated residual vanished"),
    }
}

impl SolveSummary {
    pub fn new(r: &SolveReport) -> Self {
        Self {
            cycles: r.cycles,
            matvecs: r.matvecs,
            final_rank: r.final_rank,
            converged: r.converged,
            rel_residual: r.residual_history.last().copied().unwrap_or(f64::NAN),
            residual_history: r.residual_history.clone(),
            diagnostics: r.diagnostics.iter().map(describe).collect(),
        }
    }
}

/// Wall-clock seconds; machine dependent and ignored when comparing runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub coarse: f64,
    pub setup: f64,
    pub fine: f64,
    pub total: f64,
}

impl From<PhaseTimes> for Timings {
    fn from(t: PhaseTimes) -> Self {
        Self {
            coarse: t.coarse,
            setup: t.setup,
            fine: t.fine,
            total: t.coarse + t.setup + t.fine,
        }
    }
}

/// One line of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    pub status: Status,
    pub kappa: Option<usize>,
    pub cycles: Option<usize>,
    pub matvecs: Option<usize>,
    pub rel_residual: Option<f64>,
    pub converged: bool,
    pub timings: Timings,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub command: String,
    pub status: Status,
    pub config: ExperimentConfig,
    pub problem: Option<ProblemSummary>,
    pub coarse: Option<PgdSummary>,
    pub solve: Option<SolveSummary>,
    pub variants: Vec<VariantResult>,
    pub timings: Timings,
    pub error: Option<ErrorInfo>,
}

impl Report {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            command: command.into(),
            status: Status::Ok,
            config: config.clone(),
            problem: None,
            coarse: None,
            solve: None,
            variants: Vec::new(),
            timings: Timings::default(),
            error: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report with every wall-clock field zeroed, for run-to-run comparison.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.timings = Timings::default();
        for v in &mut r.variants {
            v.timings = Timings::default();
        }
        r
    }

    /// Flat rows for table assembly: one per variant, or one for the run.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let base = CsvRow {
            command: self.command.clone(),
            variant: String::new(),
            status: self.status,
            problem: match self.config.problem {
                crate::config::ProblemKind::Diffusion => "diffusion".into(),
                crate::config::ProblemKind::ConvectionDiffusion => "convection-diffusion".into(),
            },
            corr_len: self.config.corr_len,
            sigma: self.config.sigma,
            eps: self.config.eps,
            m: self.problem.as_ref().map(|p| p.m),
            n_xi: self.problem.as_ref().map(|p| p.n_xi),
            coarse_level: self.problem.as_ref().map(|p| p.coarse_level),
            fine_level: self.problem.as_ref().map(|p| p.fine_level),
            n_x: self.problem.as_ref().map(|p| p.n_x),
            dof: self.problem.as_ref().map(|p| p.dof),
            kappa: self.coarse.as_ref().map(|c| c.kappa),
            cycles: self.solve.as_ref().map(|s| s.cycles),
            matvecs: self.solve.as_ref().map(|s| s.matvecs),
            final_rank: self.solve.as_ref().map(|s| s.final_rank),
            rel_residual: self
                .solve
                .as_ref()
                .map(|s| s.rel_residual)
                .or(self.coarse.as_ref().map(|c| c.rel_residual)),
            t_coarse: self.timings.coarse,
            t_setup: self.timings.setup,
            t_fine: self.timings.fine,
        };
        if self.variants.is_empty() {
            return vec![base];
        }
        self.variants
            .iter()
            .map(|v| CsvRow {
                variant: v.variant.clone(),
                status: v.status,
                kappa: v.kappa,
                cycles: v.cycles,
                matvecs: v.matvecs,
                final_rank: v.kappa,
                rel_residual: v.rel_residual,
                t_coarse: v.timings.coarse,
                t_setup: v.timings.setup,
                t_fine: v.timings.fine,
                ..base.clone()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.csv_rows() {
            w.serialize(row).expect("csv row serializes");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }

    pub fn write_files(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join("report.json"))?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        std::fs::write(dir.join("report.csv"), self.to_csv())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub command: String,
    pub variant: String,
    pub status: Status,
    pub problem: String,
    pub corr_len: f64,
    pub sigma: f64,
    pub eps: f64,
    pub m: Option<usize>,
    pub n_xi: Option<usize>,
    pub coarse_level: Option<usize>,
    pub fine_level: Option<usize>,
    pub n_x: Option<usize>,
    pub dof: Option<usize>,
    pub kappa: Option<usize>,
    pub cycles: Option<usize>,
    pub matvecs: Option<usize>,
    pub final_rank: Option<usize>,
    pub rel_residual: Option<f64>,
    pub t_coarse: f64,
    pub t_setup: f64,
    pub t_fine: f64,
}
