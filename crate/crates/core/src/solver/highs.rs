//! In-process HiGHS backend.
use std::num::NonZeroU32;
use std::time::Instant;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense};

use super::{classify_finished, Backend, Solution, SolveOptions, SolveStatus, SolverError};
use crate::model::{MilpModel, ObjectiveSense, RowSense, VarKind};

/// HiGHS linked through its C API.
#[derive(Debug, Clone)]
pub struct HighsBackend {
    /// Primal feasibility tolerance handed to HiGHS. Tighter than the
    /// verification tolerance so that returned points survive re-checking.
    pub feasibility_tolerance: f64,
}

impl Default for HighsBackend {
    fn default() -> Self {
        HighsBackend {
            feasibility_tolerance: 1e-9,
        }
    }
}

impl Backend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve_raw(&self, model: &MilpModel, options: &SolveOptions) -> Result<Solution, SolverError> {
        let started = Instant::now();
        let mut cost = vec![0.0; model.num_vars()];
        for (var, coef) in &model.objective().terms {
            cost[var.0] += coef;
        }
        let mut problem = RowProblem::default();
        let cols: Vec<_> = model
            .variables()
            .iter()
            .zip(&cost)
            .map(|(v, &c)| {
                problem.add_column_with_integrality(
                    c,
                    v.lower..=v.upper,
                    v.kind != VarKind::Continuous,
                )
            })
            .collect();
        for row in model.constraints() {
            let terms: Vec<_> = row.terms.iter().map(|(v, c)| (cols[v.0], *c)).collect();
            match row.sense {
                RowSense::Le => problem.add_row(..=row.rhs, &terms),
                RowSense::Ge => problem.add_row(row.rhs.., &terms),
                RowSense::Eq => problem.add_row(row.rhs..=row.rhs, &terms),
            }
        }
        let sense = match model.objective().sense {
            ObjectiveSense::Minimize => Sense::Minimise,
            ObjectiveSense::Maximize => Sense::Maximise,
        };
        let mut highs = problem
            .try_optimise(sense)
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
        highs.make_quiet();
        highs.set_threads(NonZeroU32::new(options.threads as u32).unwrap_or(NonZeroU32::MIN));
        highs.set_option("random_seed", options.random_seed as i32);
        highs.set_option("mip_rel_gap", options.relative_gap);
        highs.set_option("mip_abs_gap", 0.0);
        highs.set_option("primal_feasibility_tolerance", self.feasibility_tolerance);
        highs.set_option("mip_feasibility_tolerance", self.feasibility_tolerance);
        if let Some(limit) = options.time_limit {
            highs.set_option("time_limit", limit);
        }
        let solved = highs
            .try_solve()
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;

        let status = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let gap = if model.num_integral() == 0 {
            0.0
        } else {
            solved.mip_gap()
        };
        let constant = model.objective().constant;
        let with_values = |status: SolveStatus, gap: f64| Solution {
            status,
            values: solved.get_solution().columns().to_vec(),
            objective: solved.objective_value() + constant,
            achieved_gap: gap,
            elapsed: started.elapsed(),
        };
        Ok(match status {
            HighsModelStatus::ModelEmpty => Solution {
                status: SolveStatus::Optimal,
                values: vec![0.0; model.num_vars()],
                objective: constant,
                achieved_gap: 0.0,
                elapsed: started.elapsed(),
            },
            HighsModelStatus::Optimal => with_values(classify_finished(gap), gap.max(0.0)),
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                Solution::without_values(SolveStatus::Infeasible, started.elapsed())
            }
            HighsModelStatus::Unbounded => return Err(SolverError::Unbounded),
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedMemoryLimit => {
                if has_primal {
                    with_values(SolveStatus::Timeout, gap)
                } else {
                    Solution::without_values(SolveStatus::Timeout, started.elapsed())
                }
            }
            other => return Err(SolverError::Backend(format!("HiGHS status {other:?}"))),
        })
    }
}
