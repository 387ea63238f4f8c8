//! Stage 2: operational dispatch under a fixed plan, and the uniform
//! redistribution baseline.
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{build, BuildError, BuildMode, BuildOptions, Plug, Trajectories};
use crate::catalog::{Catalog, InfrastructurePlan};
use crate::grid::{BusId, GridNetwork};
use crate::scenario::FleetScenario;
use crate::solver::{solve, Backend, SolveOptions, SolveStatus, SolverError};

/// Version of the per-EV and per-node dispatch CSV layouts.
pub const DISPATCH_CSV_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchWeights {
    /// Weight of the cumulative SOC deviation.
    pub w1: f64,
    /// Weight of the terminal SOC deviation.
    pub w2: f64,
}

impl Default for DispatchWeights {
    fn default() -> Self {
        DispatchWeights { w1: 1.0, w2: 100.0 }
    }
}

impl DispatchWeights {
    pub fn validate(&self) -> Result<(), DispatchError> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0 && self.w2 > self.w1) {
            return Err(DispatchError::Weights(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchOptions {
    pub weights: DispatchWeights,
    pub solve: SolveOptions,
    pub build: BuildOptions,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            weights: DispatchWeights::default(),
            solve: SolveOptions::default(),
            build: BuildOptions::dispatch(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("dispatch weights need w1 >= 0, w2 >= 0 and w2 > w1, got {0:?}")]
    Weights(DispatchWeights),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("dispatch is infeasible under the given plan")]
    Infeasible,
    #[error("solver stopped with status {0} and no solution")]
    NoSolution(SolveStatus),
    #[error("network has no consumer buses")]
    NoConsumers,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub achieved_gap: f64,
    /// `sum_i sum_{t<T} (target_i - soc_i[t])`
    pub j_cum: f64,
    /// `sum_i (target_i - soc_i[T])`
    pub j_term: f64,
    /// SOC after each EV's final parking step (initial SOC if it never parks).
    pub final_soc: Vec<f64>,
    pub trajectories: Trajectories,
}

impl DispatchSolution {
    /// Mean final SOC in percent.
    pub fn avg_final_soc_pct(&self) -> f64 {
        if self.final_soc.is_empty() {
            return 100.0;
        }
        100.0 * self.final_soc.iter().sum::<f64>() / self.final_soc.len() as f64
    }

    /// Per-EV series: `ev,t,node,state,p_kw,soc` with `soc` at the start of
    /// step `t`. A final row per EV at `t = T` carries the end state.
    pub fn write_ev_csv<W: Write>(&self, scenario: &FleetScenario, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# ev_dispatch v{DISPATCH_CSV_VERSION}")?;
        writeln!(out, "ev,t,node,state,p_kw,soc")?;
        let tr = &self.trajectories;
        for i in 0..tr.power_kw.len() {
            for t in 0..tr.power_kw[i].len() {
                let node = scenario
                    .location(i, t)
                    .map_or_else(|| "away".to_string(), |n| n.to_string());
                let state = match (tr.plug[i][t], tr.charging[i][t]) {
                    (Plug::None, _) => "idle",
                    (Plug::Fast, false) => "plugged_fast",
                    (Plug::Slow, false) => "plugged_slow",
                    (Plug::Fast, true) => "charging_fast",
                    (Plug::Slow, true) => "charging_slow",
                };
                writeln!(
                    out,
                    "{i},{t},{node},{state},{:.6},{:.6}",
                    clean(tr.power_kw[i][t]),
                    clean(tr.soc[i][t])
                )?;
            }
            let end = tr.power_kw[i].len();
            writeln!(out, "{i},{end},,end,,{:.6}", clean(tr.soc[i][end]))?;
        }
        Ok(())
    }

    /// Per-node series: `node,t,p_net_pu,q_net_pu,v_pu,theta_rad`.
    pub fn write_node_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# node_dispatch v{DISPATCH_CSV_VERSION}")?;
        writeln!(out, "node,t,p_net_pu,q_net_pu,v_pu,theta_rad")?;
        let tr = &self.trajectories;
        for (b, bus) in tr.buses.iter().enumerate() {
            for t in 0..tr.p_net[b].len() {
                let q = tr
                    .q_net
                    .as_ref()
                    .map_or_else(String::new, |q| format!("{:.9}", clean(q[b][t])));
                writeln!(
                    out,
                    "{bus},{t},{:.9},{q},{:.9},{:.9}",
                    clean(tr.p_net[b][t]),
                    clean(tr.v[b][t]),
                    clean(tr.theta[b][t])
                )?;
            }
        }
        Ok(())
    }
}

/// Maps `-0.0` and solver noise below 1e-12 to `0.0` for stable text output.
pub(crate) fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// Solves the dispatch problem with charger counts fixed to `plan`.
pub fn dispatch(
    scenario: &FleetScenario,
    network: &GridNetwork,
    plan: &InfrastructurePlan,
    catalog: &Catalog,
    options: &DispatchOptions,
    backend: &dyn Backend,
) -> Result<DispatchSolution, DispatchError> {
    options.weights.validate()?;
    let built = build(
        scenario,
        network,
        catalog,
        &BuildMode::Dispatch {
            plan: plan.clone(),
            weights: options.weights,
        },
        &options.build,
    )?;
    let solution = solve(backend, &built.model, &options.solve)?;
    match solution.status {
        SolveStatus::Infeasible => return Err(DispatchError::Infeasible),
        _ if !solution.has_values() => return Err(DispatchError::NoSolution(solution.status)),
        _ => {}
    }
    let trajectories = built.index.trajectories(&solution.values);
    let horizon = scenario.horizon();
    let mut j_cum = 0.0;
    let mut j_term = 0.0;
    let mut final_soc = Vec::with_capacity(scenario.evs.len());
    for (i, ev) in scenario.evs.iter().enumerate() {
        let soc = &trajectories.soc[i];
        j_cum += soc[..horizon].iter().map(|s| ev.target_soc - s).sum::<f64>();
        j_term += ev.target_soc - soc[horizon];
        let end = scenario.final_parking_step(i).map_or(0, |t| t + 1);
        final_soc.push(soc[end]);
    }
    Ok(DispatchSolution {
        status: solution.status,
        objective: solution.objective,
        achieved_gap: solution.achieved_gap,
        j_cum,
        j_term,
        final_soc,
        trajectories,
    })
}

/// Spreads each charger type's total count evenly over the consumer buses:
/// `floor(total / |C|)` everywhere, plus one more on the first
/// `total mod |C|` buses in ascending id order.
pub fn uniform_redistribute(
    plan: &InfrastructurePlan,
    network: &GridNetwork,
) -> Result<InfrastructurePlan, DispatchError> {
    let consumers: Vec<BusId> = network.consumer_buses();
    if consumers.is_empty() {
        return Err(DispatchError::NoConsumers);
    }
    let k = consumers.len() as u32;
    let mut out = InfrastructurePlan::new();
    for (ty, total) in plan.type_totals() {
        let (each, rest) = (total / k, total % k);
        for (pos, &bus) in consumers.iter().enumerate() {
            out.set(bus, &ty, each + u32::from((pos as u32) < rest));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::SLOW_SINGLE;
    use crate::grid::{Branch, Bus};

    fn network(consumers: &[BusId]) -> GridNetwork {
        let mut buses = vec![Bus {
            id: 0,
            is_slack: true,
            transformer_kva: 1000.0,
            is_consumer: false,
            label: None,
        }];
        let mut branches = Vec::new();
        for &c in consumers {
            buses.push(Bus {
                id: c,
                is_slack: false,
                transformer_kva: 1000.0,
                is_consumer: true,
                label: None,
            });
            branches.push(Branch {
                from: 0,
                to: c,
                conductance: 10.0,
                susceptance: -20.0,
            });
        }
        GridNetwork {
            buses,
            branches,
            v_min: 0.95,
            v_max: 1.05,
            theta_min: -0.5,
            theta_max: 0.5,
            base_kv: 20.0,
            base_kva: 1000.0,
        }
    }

    #[test]
    fn weights_validation() {
        assert!(DispatchWeights::default().validate().is_ok());
        for (w1, w2) in [(1.0, 1.0), (-1.0, 5.0), (2.0, 1.0), (0.0, -1.0)] {
            assert!(DispatchWeights { w1, w2 }.validate().is_err());
        }
        assert!(DispatchWeights { w1: 0.0, w2: 1.0 }.validate().is_ok());
    }

    #[test]
    fn redistribution_exact_division() {
        let net = network(&[1, 2, 3, 4, 5]);
        let plan = InfrastructurePlan::new().with(3, SLOW_SINGLE, 10);
        let u = uniform_redistribute(&plan, &net).unwrap();
        for bus in 1..=5 {
            assert_eq!(u.count(bus, SLOW_SINGLE), 2);
        }
    }

    #[test]
    fn redistribution_remainder_rule() {
        let net = network(&[5, 1, 3]);
        let plan = InfrastructurePlan::new().with(5, SLOW_SINGLE, 7);
        let u = uniform_redistribute(&plan, &net).unwrap();
        assert_eq!(u.count(1, SLOW_SINGLE), 3);
        assert_eq!(u.count(3, SLOW_SINGLE), 2);
        assert_eq!(u.count(5, SLOW_SINGLE), 2);
    }

    #[test]
    fn redistribution_needs_consumers() {
        let net = network(&[]);
        assert!(matches!(
            uniform_redistribute(&InfrastructurePlan::new().with(0, SLOW_SINGLE, 1), &net),
            Err(DispatchError::NoConsumers)
        ));
    }
}
