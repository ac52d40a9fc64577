//! Configuration-driven benchmark runner for the low-rank stochastic
//! Galerkin solvers of `lrsg-core`: experiment configs, JSON/CSV reports,
//! factor and matrix files, and the subcommands behind the `lrsg` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;

use std::time::Instant;

use lrsg_core::krylov::Clock;

pub use config::{ConfigError, ExperimentConfig};
pub use report::{Report, Status};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const NOT_CONVERGED: i32 = 1;
    pub const INVALID_CONFIG: i32 = 2;
    pub const INTERNAL: i32 = 3;
}

/// Wall clock measured from construction.
#[derive(Clone, Copy, Debug)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Rejected by the solver library before any output was written.
    #[error("invalid input: {0}")]
    Input(lrsg_core::Error),
    #[error("cannot use coarse basis: {0}")]
    BasisFile(io::FormatError),
    #[error("solver did not converge: {0}")]
    NotConverged(lrsg_core::Error),
    #[error(transparent)]
    Core(lrsg_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] io::FormatError),
    /// A stage failure whose error report has already been written.
    #[error("{1}")]
    Reported(Box<Report>, Box<CliError>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::BasisFile(_) => exit::INVALID_CONFIG,
            CliError::NotConverged(_) => exit::NOT_CONVERGED,
            CliError::Core(_) | CliError::Io(_) | CliError::Format(_) => exit::INTERNAL,
            CliError::Reported(_, inner) => inner.exit_code(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::BasisFile(_) => "invalid-config",
            CliError::NotConverged(_) => "not-converged",
            CliError::Core(_) => "solver",
            CliError::Io(_) | CliError::Format(_) => "io",
            CliError::Reported(_, inner) => inner.kind(),
        }
    }
}

/// Exit code for a finished report.
pub fn status_code(status: Status) -> i32 {
    match status {
        Status::Ok => exit::OK,
        Status::NotConverged => exit::NOT_CONVERGED,
        Status::Error => exit::INTERNAL,
    }
}
