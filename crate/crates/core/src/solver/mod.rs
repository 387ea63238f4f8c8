//! Solving [`MilpModel`]s through interchangeable backends.
//!
//! [`HighsBackend`] links HiGHS in process. [`ExternalBackend`] writes an MPS
//! file, runs a configured solver command and parses a HiGHS-format solution
//! file. [`brute_force_oracle`] enumerates integer assignments exhaustively
//! and is meant for verifying the other two on micro-instances.
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Infeasibility, MilpModel, FEASIBILITY_TOL};

mod export;
mod external;
mod highs;
mod mps;
mod oracle;
mod simplex;

pub use export::{export_model, mangle_name, ExportFormat};
pub use external::{ExternalBackend, SOLVER_ARGS_ENV, SOLVER_ENV};
pub use highs::HighsBackend;
pub use mps::{parse_mps, MpsModel};
pub use oracle::{brute_force_oracle, DEFAULT_ENUMERATION_LIMIT};
pub use simplex::{solve_lp, LpOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped with an incumbent whose relative gap is within the requested
    /// tolerance but nonzero.
    GapFeasible,
    Infeasible,
    /// Stopped at the time limit, with or without an incumbent.
    Timeout,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapFeasible)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapFeasible => "gap_feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub relative_gap: f64,
    /// Wall-clock limit in seconds; `None` for no limit.
    pub time_limit: Option<f64>,
    pub threads: usize,
    pub random_seed: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            relative_gap: 0.05,
            time_limit: None,
            threads: 1,
            random_seed: 0,
        }
    }
}

impl SolveOptions {
    /// Options for proving optimality.
    pub fn exact() -> Self {
        SolveOptions {
            relative_gap: 0.0,
            ..SolveOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.relative_gap >= 0.0) {
            return Err(SolverError::Options(format!(
                "relative_gap must be >= 0, got {}",
                self.relative_gap
            )));
        }
        if let Some(limit) = self.time_limit {
            if !(limit > 0.0) {
                return Err(SolverError::Options(format!(
                    "time_limit must be > 0, got {limit}"
                )));
            }
        }
        if self.threads == 0 {
            return Err(SolverError::Options("threads must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// One entry per model variable in declaration order; empty when the
    /// backend returned no solution.
    pub values: Vec<f64>,
    /// Includes the model's objective constant. `NaN` without a solution.
    pub objective: f64,
    /// Relative gap reported by the backend, 0 for proven optima.
    pub achieved_gap: f64,
    pub elapsed: Duration,
}

impl Solution {
    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn without_values(status: SolveStatus, elapsed: Duration) -> Self {
        Solution {
            status,
            values: Vec::new(),
            objective: f64::NAN,
            achieved_gap: f64::INFINITY,
            elapsed,
        }
    }

    /// Value of a named variable.
    pub fn value(&self, model: &MilpModel, name: &str) -> Option<f64> {
        let id = model.var_id(name)?;
        self.values.get(id.0).copied()
    }

    /// Name-value pairs in declaration order.
    pub fn named_values<'a>(&'a self, model: &'a MilpModel) -> impl Iterator<Item = (&'a str, f64)> {
        model
            .variables()
            .iter()
            .zip(&self.values)
            .map(|(v, x)| (v.name.as_str(), *x))
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solve options: {0}")]
    Options(String),
    #[error("solver backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed solver output: {0}")]
    MalformedOutput(String),
    #[error("solver reported an error: {0}")]
    Backend(String),
    #[error("model is unbounded")]
    Unbounded,
    #[error("returned solution fails verification ({count} violations), first: {first}")]
    Verification { count: usize, first: Infeasibility },
    #[error("{size} integer assignments exceed the enumeration limit {limit}")]
    EnumerationLimit { size: f64, limit: u64 },
    #[error("export: {0}")]
    Export(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A MIP solver.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Solves `model` without post-verification; use [`solve`] instead.
    fn solve_raw(&self, model: &MilpModel, options: &SolveOptions) -> Result<Solution, SolverError>;
}

/// Solves `model` and re-checks every returned value against the model rows,
/// bounds and integrality within [`FEASIBILITY_TOL`].
pub fn solve(
    backend: &dyn Backend,
    model: &MilpModel,
    options: &SolveOptions,
) -> Result<Solution, SolverError> {
    options.validate()?;
    let solution = backend.solve_raw(model, options)?;
    verify(model, &solution)?;
    log::debug!(
        "{}: {} vars, {} rows -> {} obj {} gap {} in {:?}",
        backend.name(),
        model.num_vars(),
        model.num_rows(),
        solution.status,
        solution.objective,
        solution.achieved_gap,
        solution.elapsed
    );
    Ok(solution)
}

pub fn verify(model: &MilpModel, solution: &Solution) -> Result<(), SolverError> {
    if solution.status.has_solution() && solution.values.len() != model.num_vars() {
        return Err(SolverError::MalformedOutput(format!(
            "{} values for {} variables",
            solution.values.len(),
            model.num_vars()
        )));
    }
    if !solution.has_values() {
        return Ok(());
    }
    let mut violations = model.violations(&solution.values, FEASIBILITY_TOL);
    if violations.is_empty() {
        return Ok(());
    }
    Err(SolverError::Verification {
        count: violations.len(),
        first: violations.swap_remove(0),
    })
}

/// Maps a status and gap reported by a solver onto [`SolveStatus`].
pub(crate) fn classify_finished(gap: f64) -> SolveStatus {
    if gap <= 1e-9 {
        SolveStatus::Optimal
    } else {
        SolveStatus::GapFeasible
    }
}
