//! Evaluation metrics and figure data.
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{capex, Catalog, CatalogError, InfrastructurePlan};
use crate::dispatch::{dispatch, DispatchError, DispatchOptions, DispatchSolution};
use crate::grid::{BusId, GridNetwork};
use crate::scenario::{FleetScenario, ScenarioError};
use crate::solver::{Backend, SolveStatus};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shortfall of the optimal plan must be positive, got {0}")]
    NonPositiveShortfall(f64),
    #[error("matrix shapes differ: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("plans differ in per-type totals")]
    UnequalTotals,
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Mean unmet energy per EV in kWh, relative to each EV's target SOC at the
/// end of its final parking session. Per-EV deficits are clamped at 0.
pub fn shortfall(solution: &DispatchSolution, scenario: &FleetScenario) -> f64 {
    if scenario.evs.is_empty() {
        return 0.0;
    }
    let total: f64 = scenario
        .evs
        .iter()
        .zip(&solution.final_soc)
        .map(|(ev, soc)| (ev.battery_kwh * (ev.target_soc - soc)).max(0.0))
        .sum();
    total / scenario.evs.len() as f64
}

/// Percentage decrease of the shortfall when moving from plan O to plan U.
pub fn shortfall_reduction(shortfall_o: f64, shortfall_u: f64) -> Result<f64, MetricsError> {
    if !(shortfall_o > 0.0) {
        return Err(MetricsError::NonPositiveShortfall(shortfall_o));
    }
    Ok(100.0 * (1.0 - shortfall_u / shortfall_o))
}

/// Node-by-time matrix, rows in ascending bus id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalMatrix {
    pub buses: Vec<BusId>,
    /// `values[row][t]`
    pub values: Vec<Vec<f64>>,
}

impl NodalMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), self.values.first().map_or(0, Vec::len))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let (_, cols) = self.shape();
        (0..cols)
            .map(|t| self.values.iter().map(|row| row[t]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.iter().map(|row| row.iter().sum()).collect()
    }

    /// Long-format CSV: `node,t,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node,t,value")?;
        for (bus, row) in self.buses.iter().zip(&self.values) {
            for (t, v) in row.iter().enumerate() {
                writeln!(out, "{bus},{t},{:.9}", crate::dispatch::clean(*v))?;
            }
        }
        Ok(())
    }
}

/// Total demand (base load plus EV charging) at every non-slack bus, in p.u.
pub fn nodal_power_matrix(
    solution: &DispatchSolution,
    scenario: &FleetScenario,
    network: &GridNetwork,
) -> Result<NodalMatrix, MetricsError> {
    let horizon = scenario.horizon();
    let buses: Vec<BusId> = network
        .bus_ids()
        .into_iter()
        .filter(|&n| !network.bus(n).is_some_and(|b| b.is_slack))
        .collect();
    let mut values = Vec::with_capacity(buses.len());
    for &n in &buses {
        let mut row = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let base = if network.is_consumer(n) {
                scenario.base_load(n, t)?.0
            } else {
                0.0
            };
            let ev: f64 = scenario
                .evs_at(n, t)
                .into_iter()
                .map(|i| solution.trajectories.power_kw[i][t])
                .sum();
            row.push((base + ev) / network.base_kva);
        }
        values.push(row);
    }
    Ok(NodalMatrix { buses, values })
}

/// Elementwise `uniform - optimal`.
pub fn power_shift(uniform: &NodalMatrix, optimal: &NodalMatrix) -> Result<NodalMatrix, MetricsError> {
    if uniform.shape() != optimal.shape() || uniform.buses != optimal.buses {
        return Err(MetricsError::Shape(uniform.shape(), optimal.shape()));
    }
    Ok(NodalMatrix {
        buses: uniform.buses.clone(),
        values: uniform
            .values
            .iter()
            .zip(&optimal.values)
            .map(|(u, o)| u.iter().zip(o).map(|(a, b)| a - b).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub n_evs: usize,
    /// Percent.
    pub avg_final_soc_o: f64,
    pub avg_final_soc_u: f64,
    /// kWh per EV.
    pub shortfall_o: f64,
    pub shortfall_u: f64,
    /// Percentage points, `avg_final_soc_u - avg_final_soc_o`.
    pub soc_improvement: f64,
    /// Percent; `None` when the optimal plan has no shortfall.
    pub eta: Option<f64>,
    pub status_o: SolveStatus,
    pub status_u: SolveStatus,
    pub gap_o: f64,
    pub gap_u: f64,
    pub capex: f64,
}

impl ComparisonReport {
    pub fn from_solutions(
        o: &DispatchSolution,
        u: &DispatchSolution,
        scenario: &FleetScenario,
        capex: f64,
    ) -> Self {
        let shortfall_o = shortfall(o, scenario);
        let shortfall_u = shortfall(u, scenario);
        let avg_o = o.avg_final_soc_pct();
        let avg_u = u.avg_final_soc_pct();
        ComparisonReport {
            schema_version: REPORT_SCHEMA_VERSION,
            n_evs: scenario.evs.len(),
            avg_final_soc_o: avg_o,
            avg_final_soc_u: avg_u,
            shortfall_o,
            shortfall_u,
            soc_improvement: avg_u - avg_o,
            eta: shortfall_reduction(shortfall_o, shortfall_u).ok(),
            status_o: o.status,
            status_u: u.status,
            gap_o: o.achieved_gap,
            gap_u: u.achieved_gap,
            capex,
        }
    }

    /// Pretty JSON with values rounded to 9 decimals so the text is stable
    /// under last-bit solver noise.
    pub fn to_json(&self) -> String {
        let r = |x: f64| (x * 1e9).round() / 1e9 + 0.0;
        let rounded = ComparisonReport {
            avg_final_soc_o: r(self.avg_final_soc_o),
            avg_final_soc_u: r(self.avg_final_soc_u),
            shortfall_o: r(self.shortfall_o),
            shortfall_u: r(self.shortfall_u),
            soc_improvement: r(self.soc_improvement),
            eta: self.eta.map(r),
            gap_o: r(self.gap_o),
            gap_u: r(self.gap_u),
            ..self.clone()
        };
        serde_json::to_string_pretty(&rounded).expect("report serialises") + "\n"
    }
}

/// Both dispatches and the report built from them.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub optimal: DispatchSolution,
    pub uniform: DispatchSolution,
}

/// Dispatches plan O and plan U on the same scenario and scores them.
pub fn compare(
    plan_o: &InfrastructurePlan,
    plan_u: &InfrastructurePlan,
    scenario: &FleetScenario,
    network: &GridNetwork,
    catalog: &Catalog,
    options: &DispatchOptions,
    backend: &dyn Backend,
) -> Result<Comparison, MetricsError> {
    if plan_o.type_totals() != plan_u.type_totals() {
        return Err(MetricsError::UnequalTotals);
    }
    let optimal = dispatch(scenario, network, plan_o, catalog, options, backend)?;
    let uniform = dispatch(scenario, network, plan_u, catalog, options, backend)?;
    let report = ComparisonReport::from_solutions(&optimal, &uniform, scenario, capex(plan_o, catalog)?);
    Ok(Comparison {
        report,
        optimal,
        uniform,
    })
}

/// One bar of the CAPEX sweep figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapexPoint {
    pub fleet_size: usize,
    pub battery_kwh: f64,
    pub capex: f64,
    pub status: SolveStatus,
}

/// `fleet_size,battery_kwh,capex_eur,status`, sorted by battery then fleet.
pub fn write_capex_csv<W: Write>(points: &[CapexPoint], mut out: W) -> std::io::Result<()> {
    let mut sorted: Vec<&CapexPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.battery_kwh
            .total_cmp(&b.battery_kwh)
            .then(a.fleet_size.cmp(&b.fleet_size))
    });
    writeln!(out, "fleet_size,battery_kwh,capex_eur,status")?;
    for p in sorted {
        writeln!(out, "{},{},{},{}", p.fleet_size, p.battery_kwh, p.capex, p.status)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reduction_formula() {
        assert_abs_diff_eq!(shortfall_reduction(2.93, 0.76).unwrap(), 74.0614, epsilon = 1e-3);
        assert_abs_diff_eq!(shortfall_reduction(55.42, 16.94).unwrap(), 69.4334, epsilon = 1e-3);
        assert_eq!(shortfall_reduction(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(shortfall_reduction(3.0, 0.0).unwrap(), 100.0);
        assert!(shortfall_reduction(0.0, 0.0).is_err());
        assert!(shortfall_reduction(-1.0, 0.0).is_err());
    }

    fn matrix(values: Vec<Vec<f64>>) -> NodalMatrix {
        NodalMatrix {
            buses: (1..=values.len()).collect(),
            values,
        }
    }

    #[test]
    fn shift_is_antisymmetric() {
        let a = matrix(vec![vec![1.0, 2.0], vec![0.5, 0.0]]);
        let b = matrix(vec![vec![0.0, 3.0], vec![0.25, 1.0]]);
        let ab = power_shift(&a, &b).unwrap();
        let ba = power_shift(&b, &a).unwrap();
        for (r1, r2) in ab.values.iter().zip(&ba.values) {
            for (x, y) in r1.iter().zip(r2) {
                assert_eq!(*x, -*y);
            }
        }
        assert!(power_shift(&a, &a).unwrap().values.iter().flatten().all(|&x| x == 0.0));
        let c = matrix(vec![vec![1.0]]);
        assert!(matches!(power_shift(&a, &c), Err(MetricsError::Shape(..))));
    }

    #[test]
    fn capex_csv_order() {
        let p = |fleet, battery, capex| CapexPoint {
            fleet_size: fleet,
            battery_kwh: battery,
            capex,
            status: SolveStatus::Optimal,
        };
        let mut buf = Vec::new();
        write_capex_csv(&[p(300, 40.0, 3.0), p(250, 40.0, 2.0), p(250, 20.0, 1.0)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "fleet_size,battery_kwh,capex_eur,status\n250,20,1,optimal\n250,40,2,optimal\n300,40,3,optimal\n"
        );
    }

    #[test]
    fn report_round_trip() {
        let report = ComparisonReport {
            schema_version: REPORT_SCHEMA_VERSION,
            n_evs: 3,
            avg_final_soc_o: 80.5,
            avg_final_soc_u: 90.25,
            shortfall_o: 4.0,
            shortfall_u: 1.0,
            soc_improvement: 9.75,
            eta: Some(75.0),
            status_o: SolveStatus::Optimal,
            status_u: SolveStatus::GapFeasible,
            gap_o: 0.0,
            gap_u: 0.01,
            capex: 1500.0,
        };
        let json = report.to_json();
        let back: ComparisonReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json(), json);
    }
}
