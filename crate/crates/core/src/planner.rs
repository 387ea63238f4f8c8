//! Stage 1: cost-minimal charger placement.
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{build, BuildError, BuildMode, BuildOptions, Trajectories};
use crate::catalog::{capex, total_ports, Catalog, CatalogError, InfrastructurePlan};
use crate::grid::GridNetwork;
use crate::model::FEASIBILITY_TOL;
use crate::scenario::FleetScenario;
use crate::solver::{solve, Backend, Solution, SolveOptions, SolveStatus, SolverError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Reward in EUR per connected EV-step; breaks ties between equal-cost
    /// plans in favour of more connections.
    pub epsilon: f64,
    pub solve: SolveOptions,
    pub soc_min_terminal: f64,
    /// `false` drops the nodal power-capacity rows (ablation study).
    pub enforce_capacity_coupling: bool,
    pub include_reactive: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        let build = BuildOptions::planning();
        PlanOptions {
            epsilon: 1e-3,
            solve: SolveOptions::default(),
            soc_min_terminal: build.soc_min_terminal,
            enforce_capacity_coupling: build.enforce_capacity_coupling,
            include_reactive: build.include_reactive,
        }
    }
}

impl PlanOptions {
    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            soc_min_terminal: self.soc_min_terminal,
            enforce_capacity_coupling: self.enforce_capacity_coupling,
            include_reactive: self.include_reactive,
            ..BuildOptions::planning()
        }
    }

    /// The total reward `epsilon * |V| * T` must stay below the cheapest
    /// unit cost so it can never pay for a charger.
    pub fn validate(&self, scenario: &FleetScenario, catalog: &Catalog) -> Result<(), PlanError> {
        if !(self.epsilon >= 0.0) {
            return Err(PlanError::Epsilon(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        let reward = self.epsilon * (scenario.evs.len() * scenario.horizon()) as f64;
        let cheapest = catalog
            .types()
            .iter()
            .map(|t| t.unit_cost)
            .fold(f64::INFINITY, f64::min);
        if reward >= cheapest {
            return Err(PlanError::Epsilon(format!(
                "epsilon * |V| * T = {reward} is not below the cheapest unit cost {cheapest}"
            )));
        }
        self.solve.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid epsilon: {0}")]
    Epsilon(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("planning problem is infeasible")]
    Infeasible,
    #[error("solver stopped with status {0} and no solution")]
    NoSolution(SolveStatus),
    #[error("charger count {0} is not integral")]
    NonIntegral(f64),
    #[error("rounded plan fails verification: {0}")]
    Rounding(String),
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub plan: InfrastructurePlan,
    pub solution: Solution,
    pub capex: f64,
    /// Operational schedule found alongside the plan; a witness that the
    /// plan admits a feasible dispatch.
    pub trajectories: Trajectories,
}

pub fn plan_infrastructure(
    scenario: &FleetScenario,
    network: &GridNetwork,
    catalog: &Catalog,
    options: &PlanOptions,
    backend: &dyn Backend,
) -> Result<PlanOutcome, PlanError> {
    options.validate(scenario, catalog)?;
    let built = build(
        scenario,
        network,
        catalog,
        &BuildMode::Plan {
            epsilon: options.epsilon,
        },
        &options.build_options(),
    )?;
    let solution = solve(backend, &built.model, &options.solve)?;
    match solution.status {
        SolveStatus::Infeasible => return Err(PlanError::Infeasible),
        _ if !solution.has_values() => return Err(PlanError::NoSolution(solution.status)),
        _ => {}
    }
    let plan = built
        .index
        .extract_plan(&solution.values)
        .map_err(PlanError::NonIntegral)?;

    // Re-check with the counts snapped to integers.
    let mut snapped = solution.values.clone();
    for var in built.index.units.values() {
        snapped[var.0] = snapped[var.0].round();
    }
    if let Some(v) = built.model.violations(&snapped, FEASIBILITY_TOL).first() {
        return Err(PlanError::Rounding(v.to_string()));
    }
    let capex = capex(&plan, catalog)?;
    Ok(PlanOutcome {
        trajectories: built.index.trajectories(&snapped),
        plan,
        solution,
        capex,
    })
}

/// Per-type unit counts with unit, port and cost totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    /// Units per charger type, including types with zero units.
    pub per_type: BTreeMap<String, u32>,
    pub units: u32,
    pub ports: u32,
    pub capex: f64,
}

pub fn plan_summary(plan: &InfrastructurePlan, catalog: &Catalog) -> Result<PlanSummary, CatalogError> {
    let mut per_type: BTreeMap<String, u32> =
        catalog.types().iter().map(|t| (t.id.clone(), 0)).collect();
    for (ty, n) in plan.type_totals() {
        catalog.get(&ty)?;
        per_type.insert(ty, n);
    }
    Ok(PlanSummary {
        units: plan.total_units(),
        ports: total_ports(plan, catalog)?,
        capex: capex(plan, catalog)?,
        per_type,
    })
}

impl PlanSummary {
    /// `type,units` rows followed by `total_units`, `total_ports`, `capex_eur`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item,value")?;
        for (ty, n) in &self.per_type {
            writeln!(out, "{ty},{n}")?;
        }
        writeln!(out, "total_units,{}", self.units)?;
        writeln!(out, "total_ports,{}", self.ports)?;
        writeln!(out, "capex_eur,{}", self.capex)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{default_catalog, FAST_MULTI, FAST_SINGLE, SLOW_MULTI, SLOW_SINGLE};
    use crate::scenario::{generate_fleet, ScenarioConfig};

    fn counts(ss: u32, sm: u32, fs: u32, fm: u32) -> InfrastructurePlan {
        InfrastructurePlan::new()
            .with(2, SLOW_SINGLE, ss)
            .with(3, SLOW_MULTI, sm)
            .with(4, FAST_SINGLE, fs)
            .with(5, FAST_MULTI, fm)
    }

    #[test]
    fn summary_of_empty_plan() {
        let s = plan_summary(&InfrastructurePlan::new(), &default_catalog()).unwrap();
        assert_eq!((s.units, s.ports, s.capex), (0, 0, 0.0));
        assert_eq!(s.per_type.len(), 4);
        assert!(s.per_type.values().all(|&n| n == 0));
    }

    #[test]
    fn summary_counts_ports() {
        let cat = default_catalog();
        let plan = counts(1, 1, 1, 1);
        let s = plan_summary(&plan, &cat).unwrap();
        let ports: u32 = cat.types().iter().map(|t| t.ports).sum();
        assert_eq!(s.units, 4);
        assert_eq!(s.ports, ports);
        assert_eq!(s.capex, cat.types().iter().map(|t| t.unit_cost).sum::<f64>());
    }

    #[test]
    fn summary_csv() {
        let mut buf = Vec::new();
        plan_summary(&counts(2, 0, 0, 0), &default_catalog())
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("item,value\n"));
        assert!(text.contains("total_units,2\n"));
    }

    #[test]
    fn epsilon_invariant() {
        let net = crate::grid::bundled_cigre();
        let scenario = generate_fleet(&ScenarioConfig::new(600, 40.0, 0), &net).unwrap();
        let cat = default_catalog();
        assert!(PlanOptions::default().validate(&scenario, &cat).is_ok());
        let too_big = PlanOptions {
            epsilon: 0.2,
            ..PlanOptions::default()
        };
        assert!(matches!(too_big.validate(&scenario, &cat), Err(PlanError::Epsilon(_))));
        let negative = PlanOptions {
            epsilon: -1e-3,
            ..PlanOptions::default()
        };
        assert!(matches!(negative.validate(&scenario, &cat), Err(PlanError::Epsilon(_))));
    }
}
