//! Backend that runs a solver executable on an exported MPS file.
//!
//! The command template is split on whitespace and the placeholders
//! `{solver}`, `{model}`, `{solution}` and `{options}` are substituted per
//! token. `{options}` names a HiGHS-style options file holding the gap, time
//! limit, thread count and seed. The solver must write a HiGHS raw solution
//! file (`write_solution_style = 0`) to `{solution}`:
//!
//! ```text
//! Model status
//! Optimal
//!
//! # Primal solution values
//! Feasible
//! Objective 3
//! # Columns 1
//! x 3
//! ...
//! ```
//!
//! A relative gap is read from a `Gap <value>%` line on the solver's standard
//! output when present.
use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use super::export::{export_model, mangle_name, ExportFormat};
use super::{classify_finished, Backend, Solution, SolveOptions, SolveStatus, SolverError};
use crate::model::MilpModel;

/// Environment variable naming the solver executable.
pub const SOLVER_ENV: &str = "EVPLAN_SOLVER";
/// Environment variable overriding the command template.
pub const SOLVER_ARGS_ENV: &str = "EVPLAN_SOLVER_COMMAND";

pub const HIGHS_TEMPLATE: &str =
    "{solver} --model_file {model} --solution_file {solution} --options_file {options}";

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub solver: PathBuf,
    pub template: String,
}

impl ExternalBackend {
    pub fn new(solver: impl Into<PathBuf>) -> Self {
        ExternalBackend {
            solver: solver.into(),
            template: HIGHS_TEMPLATE.to_string(),
        }
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = template.into();
        self
    }

    /// Reads [`SOLVER_ENV`] and, if set, [`SOLVER_ARGS_ENV`].
    pub fn from_env() -> Result<Self, SolverError> {
        let solver = std::env::var_os(SOLVER_ENV)
            .ok_or_else(|| SolverError::Unavailable(format!("{SOLVER_ENV} is not set")))?;
        let mut backend = ExternalBackend::new(solver);
        if let Ok(t) = std::env::var(SOLVER_ARGS_ENV) {
            backend.template = t;
        }
        Ok(backend)
    }
}

fn options_file(options: &SolveOptions) -> String {
    let mut out = format!(
        "mip_rel_gap = {}\nmip_abs_gap = 0\nthreads = {}\nrandom_seed = {}\n\
         primal_feasibility_tolerance = 1e-9\nmip_feasibility_tolerance = 1e-9\n\
         write_solution_style = 0\n",
        options.relative_gap, options.threads, options.random_seed
    );
    if let Some(limit) = options.time_limit {
        out.push_str(&format!("time_limit = {limit}\n"));
    }
    out
}

impl Backend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn solve_raw(&self, model: &MilpModel, options: &SolveOptions) -> Result<Solution, SolverError> {
        let started = Instant::now();
        let dir = tempfile::tempdir()?;
        let model_path = dir.path().join("model.mps");
        let solution_path = dir.path().join("model.sol");
        let options_path = dir.path().join("solver.opt");
        fs::write(&model_path, export_model(model, ExportFormat::Mps)?)?;
        fs::write(&options_path, options_file(options))?;

        let solver = self.solver.to_string_lossy();
        let args: Vec<String> = self
            .template
            .split_whitespace()
            .map(|tok| {
                tok.replace("{solver}", &solver)
                    .replace("{model}", &model_path.to_string_lossy())
                    .replace("{solution}", &solution_path.to_string_lossy())
                    .replace("{options}", &options_path.to_string_lossy())
            })
            .collect();
        let (program, rest) = args
            .split_first()
            .ok_or_else(|| SolverError::Unavailable("empty solver command template".into()))?;
        let output = Command::new(program)
            .args(rest)
            .output()
            .map_err(|e| SolverError::Unavailable(format!("cannot run `{program}`: {e}")))?;
        if !output.status.success() {
            return Err(SolverError::Backend(format!(
                "`{program}` exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = fs::read_to_string(&solution_path).map_err(|e| {
            SolverError::MalformedOutput(format!("no solution file written: {e}"))
        })?;
        let stdout = String::from_utf8_lossy(&output.stdout);
        let mut solution = parse_solution(model, &text, options, &stdout)?;
        solution.elapsed = started.elapsed();
        Ok(solution)
    }
}

fn parse_gap(stdout: &str) -> Option<f64> {
    stdout.lines().rev().find_map(|line| {
        let mut tokens = line.split_whitespace();
        if tokens.next()? != "Gap" {
            return None;
        }
        let value = tokens.next()?.strip_suffix('%')?;
        value.parse::<f64>().ok().map(|g| g / 100.0)
    })
}

/// Parses a HiGHS raw solution file against `model`.
pub(crate) fn parse_solution(
    model: &MilpModel,
    text: &str,
    options: &SolveOptions,
    stdout: &str,
) -> Result<Solution, SolverError> {
    let bad = |msg: String| SolverError::MalformedOutput(msg);
    let mut lines = text.lines().map(str::trim);
    let status_line = loop {
        match lines.next() {
            Some("Model status") => break lines.next().ok_or_else(|| bad("missing model status".into()))?,
            Some(_) => continue,
            None => return Err(bad("missing `Model status` header".into())),
        }
    };
    let finished = match status_line {
        "Optimal" => true,
        "Infeasible" | "Primal infeasible or unbounded" => {
            return Ok(Solution::without_values(SolveStatus::Infeasible, Default::default()))
        }
        "Unbounded" => return Err(SolverError::Unbounded),
        "Time limit reached" => false,
        "Empty" => {
            return Ok(Solution {
                status: SolveStatus::Optimal,
                values: vec![0.0; model.num_vars()],
                objective: model.objective().constant,
                achieved_gap: 0.0,
                elapsed: Default::default(),
            })
        }
        other => return Err(SolverError::Backend(format!("solver status `{other}`"))),
    };

    // Primal section.
    let mut feasible = false;
    let mut columns: Option<usize> = None;
    for line in lines.by_ref() {
        if line == "Feasible" {
            feasible = true;
        }
        if let Some(n) = line.strip_prefix("# Columns ") {
            columns = Some(n.trim().parse().map_err(|_| bad(format!("bad column count `{n}`")))?);
            break;
        }
    }
    if !feasible || columns.is_none() {
        if finished {
            return Err(bad("optimal status without a primal solution".into()));
        }
        return Ok(Solution::without_values(SolveStatus::Timeout, Default::default()));
    }
    let n = columns.unwrap_or(0);
    if n != model.num_vars() {
        return Err(bad(format!("{n} columns for {} variables", model.num_vars())));
    }
    let index: HashMap<String, usize> = model
        .variables()
        .iter()
        .enumerate()
        .map(|(j, v)| (mangle_name(&v.name), j))
        .collect();
    let mut values = vec![f64::NAN; n];
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| bad("truncated column values".into()))?;
        let mut tokens = line.split_whitespace();
        let (Some(name), Some(value), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(bad(format!("bad column line `{line}`")));
        };
        let j = *index
            .get(name)
            .ok_or_else(|| bad(format!("unknown column `{name}`")))?;
        values[j] = value
            .parse()
            .map_err(|_| bad(format!("bad value `{value}` for `{name}`")))?;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(bad("some columns have no value".into()));
    }
    let objective = model.objective_value(&values);
    let (status, gap) = if !finished {
        (SolveStatus::Timeout, parse_gap(stdout).unwrap_or(f64::INFINITY))
    } else if model.num_integral() == 0 {
        (SolveStatus::Optimal, 0.0)
    } else {
        // Without a reported gap the requested tolerance is the only bound.
        let gap = parse_gap(stdout).unwrap_or(options.relative_gap);
        (classify_finished(gap), gap)
    };
    Ok(Solution {
        status,
        values,
        objective,
        achieved_gap: gap,
        elapsed: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectiveSense, RowSense, VarKind};

    fn model() -> MilpModel {
        let mut m = MilpModel::new("t");
        let x = m.add_var("x", VarKind::Continuous, 0.0, 10.0).unwrap();
        let k = m.add_var("k(1)", VarKind::Integer, 0.0, 3.0).unwrap();
        m.add_row("lo", "", vec![(x, 1.0), (k, 1.0)], RowSense::Ge, 3.0)
            .unwrap();
        m.set_objective(ObjectiveSense::Minimize, vec![(x, 1.0), (k, 2.0)], 0.5)
            .unwrap();
        m
    }

    const OPTIMAL: &str = "Model status\nOptimal\n\n# Primal solution values\nFeasible\nObjective 3.5\n# Columns 2\nx 3\nk(1) 0\n# Rows 1\nlo 3\n";

    #[test]
    fn parses_optimal_file() {
        let s = parse_solution(&model(), OPTIMAL, &SolveOptions::exact(), "  Gap   0% (tolerance: 0%)\n").unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.values, vec![3.0, 0.0]);
        assert_eq!(s.objective, 3.5);
    }

    #[test]
    fn gap_handling() {
        let opts = SolveOptions::default();
        let s = parse_solution(&model(), OPTIMAL, &opts, "").unwrap();
        assert_eq!(s.status, SolveStatus::GapFeasible);
        assert_eq!(s.achieved_gap, opts.relative_gap);
        let s = parse_solution(&model(), OPTIMAL, &opts, "Gap 1.5%\n").unwrap();
        assert!((s.achieved_gap - 0.015).abs() < 1e-15);
        assert_eq!(parse_gap("Gap inf"), None);
    }

    #[test]
    fn statuses_and_errors() {
        let infeasible = "Model status\nInfeasible\n";
        let s = parse_solution(&model(), infeasible, &SolveOptions::exact(), "").unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        let timeout = "Model status\nTime limit reached\n\n# Primal solution values\nNone\n";
        let s = parse_solution(&model(), timeout, &SolveOptions::exact(), "").unwrap();
        assert_eq!(s.status, SolveStatus::Timeout);
        assert!(!s.has_values());
        for broken in [
            "garbage",
            "Model status\nOptimal\n",
            "Model status\nOptimal\nFeasible\n# Columns 2\nx 3\n",
            "Model status\nOptimal\nFeasible\n# Columns 2\nx 3\ny 1\n",
            "Model status\nOptimal\nFeasible\n# Columns 2\nx 3\nk(1) one\n",
        ] {
            assert!(matches!(
                parse_solution(&model(), broken, &SolveOptions::exact(), ""),
                Err(SolverError::MalformedOutput(_))
            ), "{broken}");
        }
    }

    #[test]
    fn missing_executable_is_unavailable() {
        let b = ExternalBackend::new("/nonexistent/solver-binary");
        assert!(matches!(
            b.solve_raw(&model(), &SolveOptions::exact()),
            Err(SolverError::Unavailable(_))
        ));
    }

    #[test]
    fn options_file_contents() {
        let text = options_file(&SolveOptions {
            relative_gap: 0.05,
            time_limit: Some(30.0),
            threads: 2,
            random_seed: 7,
        });
        assert!(text.contains("mip_rel_gap = 0.05\n"));
        assert!(text.contains("threads = 2\n"));
        assert!(text.contains("random_seed = 7\n"));
        assert!(text.contains("time_limit = 30\n"));
    }
}
