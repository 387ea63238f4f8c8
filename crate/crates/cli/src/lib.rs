//! Command-line front end for the `evplan` library.
//!
//! Every command writes its artifacts into a staging directory that is
//! renamed onto `--out` only after the run succeeds. Exit codes: 0 success,
//! 2 configuration error, 3 infeasible model, 4 solver failure, 1 anything
//! else (for example an unwritable output directory).
use std::path::PathBuf;

use anyhow::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

use evplan::dispatch::DispatchError;
use evplan::metrics::MetricsError;
use evplan::planner::PlanError;
use evplan::solver::{ExportFormat, SolverError};

pub mod config;
pub mod output;
mod run;

pub use config::RunConfig;
pub use run::{execute, resolve_config, sweep_points, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "evplan", version, about = "EV charging infrastructure planning and dispatch studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelFormat {
    Mps,
    Lp,
}

impl From<ModelFormat> for ExportFormat {
    fn from(f: ModelFormat) -> Self {
        match f {
            ModelFormat::Mps => ExportFormat::Mps,
            ModelFormat::Lp => ExportFormat::Lp,
        }
    }
}

/// Options shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Network document; defaults to the bundled CIGRE feeder.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Charger catalog document; defaults to the four standard types.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Fleet generation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative MIP gap.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Solver time limit per model, seconds.
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    /// Fleet size; a comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub fleet: Vec<usize>,
    /// Battery capacity in kWh; a comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub battery: Vec<f64>,
    /// External solver executable (HiGHS command-line compatible).
    #[arg(long, env = "EVPLAN_SOLVER")]
    pub solver: Option<PathBuf>,
    /// Drop the hardware power-capacity rows from the models.
    #[arg(long = "ablate-capacity-constraints")]
    pub ablate_capacity_constraints: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Output directory, created atomically.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stage 1: cost-optimal charger placement.
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        /// Also write the uniformly redistributed plan.
        #[arg(long = "uniform-baseline")]
        uniform_baseline: bool,
        /// Also write the planning model in this format.
        #[arg(long, value_enum)]
        export: Option<ModelFormat>,
    },
    /// Check a network, and optionally a plan against it.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Stage 2 on a plan and on its uniform redistribution.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        /// Plan CSV; Stage 1 runs first when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Plan (and compare) over fleet sizes and battery capacities.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        /// Worker threads.
        #[arg(long)]
        workers: Option<usize>,
        /// Skip the Stage 2 comparison at each point.
        #[arg(long = "plan-only")]
        plan_only: bool,
    },
    /// Stage 1 with and without the hardware power-capacity rows.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Write the Stage 1 model, or the Stage 2 model for `--plan`.
    ExportModel {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mps")]
        export: ModelFormat,
    },
}

/// Marks errors in reading or checking inputs.
#[derive(Debug)]
pub struct ConfigFailure;

impl std::fmt::Display for ConfigFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid configuration")
    }
}

fn solver_code(e: &SolverError) -> i32 {
    match e {
        SolverError::Options(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn dispatch_code(e: &DispatchError) -> i32 {
    match e {
        DispatchError::Infeasible => EXIT_INFEASIBLE,
        DispatchError::Solver(s) => solver_code(s),
        DispatchError::NoSolution(_) => EXIT_SOLVER,
        DispatchError::Io(_) => EXIT_OTHER,
        DispatchError::Weights(_) | DispatchError::Build(_) | DispatchError::NoConsumers => EXIT_CONFIG,
    }
}

/// Exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    if err.downcast_ref::<ConfigFailure>().is_some() {
        return EXIT_CONFIG;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PlanError>() {
            return match e {
                PlanError::Infeasible => EXIT_INFEASIBLE,
                PlanError::Solver(s) => solver_code(s),
                PlanError::NoSolution(_) | PlanError::NonIntegral(_) | PlanError::Rounding(_) => EXIT_SOLVER,
                PlanError::Epsilon(_) | PlanError::Build(_) | PlanError::Catalog(_) => EXIT_CONFIG,
            };
        }
        if let Some(e) = cause.downcast_ref::<DispatchError>() {
            return dispatch_code(e);
        }
        if let Some(e) = cause.downcast_ref::<MetricsError>() {
            return match e {
                MetricsError::Dispatch(d) => dispatch_code(d),
                MetricsError::UnequalTotals | MetricsError::Catalog(_) | MetricsError::Scenario(_) => EXIT_CONFIG,
                _ => EXIT_OTHER,
            };
        }
        if let Some(e) = cause.downcast_ref::<SolverError>() {
            return solver_code(e);
        }
    }
    EXIT_OTHER
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            code
        }
    }
}
