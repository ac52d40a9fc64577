use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrsg::config::Sources;
use lrsg::{commands, exit, status_code, CliError, ExperimentConfig, Report, StdClock};

#[derive(Parser)]
#[command(name = "lrsg", version, about = "Low-rank stochastic Galerkin benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coarse PGD solve, then the preconditioned low-rank solve on the fine grid.
    Run {
        #[command(flatten)]
        common: Common,
        /// Stochastic basis from an earlier `coarse-only` run; skips the coarse solve.
        #[arg(long, value_name = "PATH")]
        coarse_basis: Option<PathBuf>,
    },
    /// Run several solver variants on the same problem.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Only the coarse-grid PGD solve.
    CoarseOnly {
        #[command(flatten)]
        common: Common,
    },
    /// Write the spatial and stochastic matrices in Matrix Market format.
    ExportMatrices {
        #[command(flatten)]
        common: Common,
        /// Grid level to assemble; defaults to the fine level.
        #[arg(long)]
        level: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Format of the summary printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        Ok(ExperimentConfig::load(&Sources {
            file: self.config.as_deref(),
            overrides: &self.set,
            seed: self.seed,
            out_dir: self.out.as_deref(),
        })?)
    }
}

fn print(report: &Report, format: Format) {
    match format {
        Format::Json => println!("{}", report.to_json()),
        Format::Csv => print!("{}", report.to_csv()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let clock = StdClock::new();
    let (common, result) = match &cli.command {
        Command::Run { common, coarse_basis } => (
            common,
            common.load().and_then(|c| commands::run(&c, coarse_basis.as_deref(), &clock)),
        ),
        Command::Compare { common } => (common, common.load().and_then(|c| commands::compare(&c, &clock))),
        Command::CoarseOnly { common } => (common, common.load().and_then(|c| commands::coarse_only(&c, &clock))),
        Command::ExportMatrices { common, level } => (
            common,
            common.load().and_then(|c| commands::export_matrices(&c, *level, &clock)),
        ),
    };
    let code = match result {
        Ok(report) => {
            print(&report, common.format);
            status_code(report.status)
        }
        Err(CliError::Reported(report, err)) => {
            print(&report, common.format);
            eprintln!("error: {err}");
            err.exit_code()
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    };
    debug_assert!((exit::OK..=exit::INTERNAL).contains(&code));
    ExitCode::from(code as u8)
}
