//! Assembly of the shared planning/dispatch MILP.
//!
//! Both stages use the same constraint families; they differ only in
//! whether charger counts are integer decisions ([`BuildMode::Plan`]) or
//! fixed parameters ([`BuildMode::Dispatch`]), and in the objective.
//!
//! Units: EV power and base load are in kW, nodal injections, voltages and
//! angles in per unit. The kW-to-p.u. factor `1 / base_kva` is folded into
//! the balance-row coefficients.
//!
//! Row families (stable names, used as prefixes in exported models):
//!
//! | group                | rows                                                    |
//! |----------------------|---------------------------------------------------------|
//! | `soc_dynamics`       | `soc[t+1] = soc[t] + eta*dt/E * p[t]`, `soc[0] = init`   |
//! | `plug_exclusivity`   | `x_fast + x_slow <= 1`                                  |
//! | `charge_implies_plug`| `y_fast <= x_fast`, `y_slow <= x_slow`                  |
//! | `power_cap_by_type`  | `p <= P_fast*y_fast + P_slow*y_slow`                     |
//! | `away_disconnect`    | `x_fast = x_slow = 0` while away                        |
//! | `p_balance`          | `P_net = -(P_load + sum p) / S_base` (non-slack)        |
//! | `q_balance`          | `Q_net = -Q_load / S_base` (non-slack, optional)        |
//! | `flow_linear`        | linearized injections in `V`, `theta`                   |
//! | `state_limits`       | voltage/angle limits; slack pinned to `V = 1, theta = 0`|
//! | `nodal_ev_power`     | `sum p <= sum_j P_j alpha_j N_j`                        |
//! | `transformer_limit`  | `P_load + sum p <= S_tr`                                |
//! | `port_limit`         | `sum (x_fast + x_slow) <= sum_j alpha_j N_j`            |
//! | `soc_bounds`         | `soc_floor <= soc <= soc_ceiling`                       |
//! | `soc_terminal`       | `soc >= soc_min` after the final parking step           |
use std::collections::BTreeMap;

use thiserror::Error;

use crate::catalog::{nodal_capacity, Catalog, CatalogError, InfrastructurePlan, SpeedClass};
use crate::dispatch::DispatchWeights;
use crate::grid::{BusId, GridNetwork};
use crate::model::{MilpModel, ModelError, ObjectiveSense, RowSense, VarId, VarKind, INTEGRALITY_TOL};
use crate::scenario::{FleetScenario, ScenarioError};

pub const SOC_DYNAMICS: &str = "soc_dynamics";
pub const PLUG_EXCLUSIVITY: &str = "plug_exclusivity";
pub const CHARGE_IMPLIES_PLUG: &str = "charge_implies_plug";
pub const POWER_CAP_BY_TYPE: &str = "power_cap_by_type";
pub const AWAY_DISCONNECT: &str = "away_disconnect";
pub const P_BALANCE: &str = "p_balance";
pub const Q_BALANCE: &str = "q_balance";
pub const FLOW_LINEAR: &str = "flow_linear";
pub const STATE_LIMITS: &str = "state_limits";
pub const NODAL_EV_POWER: &str = "nodal_ev_power";
pub const TRANSFORMER_LIMIT: &str = "transformer_limit";
pub const PORT_LIMIT: &str = "port_limit";
pub const SOC_BOUNDS: &str = "soc_bounds";
pub const SOC_TERMINAL: &str = "soc_terminal";

pub const CONSTRAINT_GROUPS: [&str; 14] = [
    SOC_DYNAMICS,
    PLUG_EXCLUSIVITY,
    CHARGE_IMPLIES_PLUG,
    POWER_CAP_BY_TYPE,
    AWAY_DISCONNECT,
    P_BALANCE,
    Q_BALANCE,
    FLOW_LINEAR,
    STATE_LIMITS,
    NODAL_EV_POWER,
    TRANSFORMER_LIMIT,
    PORT_LIMIT,
    SOC_BOUNDS,
    SOC_TERMINAL,
];

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("charger catalog is empty")]
    EmptyCatalog,
    #[error("EV {ev} references bus {bus}, which is not in the network")]
    EvNodeMissing { ev: usize, bus: BusId },
    #[error("invalid plan: {0}")]
    Plan(#[from] CatalogError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("invalid build option: {0}")]
    Options(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuildMode {
    /// Charger counts are integer decisions; objective is CAPEX minus
    /// `epsilon` per connected EV-step.
    Plan { epsilon: f64 },
    /// Charger counts fixed to `plan`; objective is the weighted SOC deviation.
    Dispatch {
        plan: InfrastructurePlan,
        weights: DispatchWeights,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Minimum SOC after each EV's final parking step.
    pub soc_min_terminal: f64,
    pub soc_floor: f64,
    pub soc_ceiling: f64,
    /// Emit reactive balance and reactive flow rows.
    pub include_reactive: bool,
    /// Emit the hardware power-capacity rows; `false` reproduces the
    /// ablation without nodal power coupling.
    pub enforce_capacity_coupling: bool,
}

impl BuildOptions {
    /// Planning defaults: terminal SOC of at least 0.80.
    pub fn planning() -> Self {
        BuildOptions {
            soc_min_terminal: 0.80,
            soc_floor: 0.05,
            soc_ceiling: 1.0,
            include_reactive: true,
            enforce_capacity_coupling: true,
        }
    }

    /// Dispatch defaults: the terminal row sits at the SOC floor, leaving the
    /// objective to drive SOC toward target.
    pub fn dispatch() -> Self {
        BuildOptions {
            soc_min_terminal: 0.05,
            ..BuildOptions::planning()
        }
    }
}

/// Connection state of one EV at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plug {
    None,
    Fast,
    Slow,
}

#[derive(Debug, Clone)]
pub struct EvVars {
    pub x_fast: Vec<VarId>,
    pub x_slow: Vec<VarId>,
    pub y_fast: Vec<VarId>,
    pub y_slow: Vec<VarId>,
    pub power: Vec<VarId>,
    /// `horizon + 1` entries; `soc[t]` is the state at the start of step `t`.
    pub soc: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub struct BusVars {
    pub id: BusId,
    pub p_net: Vec<VarId>,
    pub q_net: Option<Vec<VarId>>,
    pub v: Vec<VarId>,
    pub theta: Vec<VarId>,
}

/// Maps model columns back to their physical meaning.
#[derive(Debug, Clone)]
pub struct ModelIndex {
    pub horizon: usize,
    pub evs: Vec<EvVars>,
    pub buses: Vec<BusVars>,
    /// Integer charger-count columns, plan mode only.
    pub units: BTreeMap<(BusId, String), VarId>,
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MilpModel,
    pub index: ModelIndex,
}

/// Per-EV and per-bus time series read from a solved model.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    /// `[ev][t]`, kW.
    pub power_kw: Vec<Vec<f64>>,
    /// `[ev][t]` for `t` in `0..=horizon`.
    pub soc: Vec<Vec<f64>>,
    pub plug: Vec<Vec<Plug>>,
    pub charging: Vec<Vec<bool>>,
    /// Bus ids in row order of the nodal series.
    pub buses: Vec<BusId>,
    /// `[bus][t]`, p.u.
    pub p_net: Vec<Vec<f64>>,
    pub q_net: Option<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

fn suffix2(a: impl std::fmt::Display, b: impl std::fmt::Display) -> String {
    format!("{a},{b}")
}

/// Largest useful count of one charger type at a bus: enough ports for every
/// EV that ever parks there and enough power for all of them at the fastest
/// available class rating. Any optimum above this bound stays optimal with
/// the excess removed, so the bound never cuts off the best plan.
fn unit_upper_bound(evs_at_bus: usize, per_port_kw: f64, ports: u32, class_max_kw: f64) -> f64 {
    if evs_at_bus == 0 {
        return 0.0;
    }
    let n = evs_at_bus as f64;
    let alpha = f64::from(ports);
    (n / alpha).ceil().max((n * class_max_kw / (per_port_kw * alpha)).ceil())
}

pub fn build(
    scenario: &FleetScenario,
    network: &GridNetwork,
    catalog: &Catalog,
    mode: &BuildMode,
    options: &BuildOptions,
) -> Result<BuiltModel, BuildError> {
    if catalog.is_empty() {
        return Err(BuildError::EmptyCatalog);
    }
    for ev in &scenario.evs {
        for bus in [ev.home_node, ev.work_node] {
            if !network.contains(bus) {
                return Err(BuildError::EvNodeMissing { ev: ev.id, bus });
            }
        }
    }
    if !(0.0 <= options.soc_floor && options.soc_floor <= options.soc_ceiling) {
        return Err(BuildError::Options("need 0 <= soc_floor <= soc_ceiling".into()));
    }
    match mode {
        BuildMode::Plan { epsilon } if !(*epsilon >= 0.0) => {
            return Err(BuildError::Options("epsilon must be nonnegative".into()));
        }
        BuildMode::Dispatch { plan, weights } => {
            plan.validate(network, catalog)?;
            weights
                .validate()
                .map_err(|e| BuildError::Options(e.to_string()))?;
        }
        _ => {}
    }

    let horizon = scenario.horizon();
    let dt = scenario.time.step_hours;
    let base = network.base_kva;
    let name = match mode {
        BuildMode::Plan { .. } => "ev_infrastructure_plan",
        BuildMode::Dispatch { .. } => "ev_fleet_dispatch",
    };
    let mut m = MilpModel::new(name);

    let fast_kw = catalog.class_port_power(SpeedClass::Fast);
    let slow_kw = catalog.class_port_power(SpeedClass::Slow);
    let class_ub = |rating: Option<f64>| if rating.is_some() { 1.0 } else { 0.0 };

    // Locations are looked up many times below.
    let location: Vec<Vec<Option<BusId>>> = (0..scenario.evs.len())
        .map(|i| (0..horizon).map(|t| scenario.location(i, t)).collect())
        .collect();

    // EV columns.
    let mut evs = Vec::with_capacity(scenario.evs.len());
    for i in 0..scenario.evs.len() {
        let mut vars = EvVars {
            x_fast: Vec::with_capacity(horizon),
            x_slow: Vec::with_capacity(horizon),
            y_fast: Vec::with_capacity(horizon),
            y_slow: Vec::with_capacity(horizon),
            power: Vec::with_capacity(horizon),
            soc: Vec::with_capacity(horizon + 1),
        };
        for t in 0..horizon {
            let s = suffix2(i, t);
            vars.x_fast
                .push(m.add_var(format!("x_fast({s})"), VarKind::Binary, 0.0, class_ub(fast_kw))?);
            vars.x_slow
                .push(m.add_var(format!("x_slow({s})"), VarKind::Binary, 0.0, class_ub(slow_kw))?);
            vars.y_fast
                .push(m.add_var(format!("y_fast({s})"), VarKind::Binary, 0.0, class_ub(fast_kw))?);
            vars.y_slow
                .push(m.add_var(format!("y_slow({s})"), VarKind::Binary, 0.0, class_ub(slow_kw))?);
            vars.power.push(m.add_var(
                format!("p({s})"),
                VarKind::Continuous,
                0.0,
                f64::INFINITY,
            )?);
        }
        for t in 0..=horizon {
            vars.soc.push(m.add_var(
                format!("soc({})", suffix2(i, t)),
                VarKind::Continuous,
                0.0,
                1.0,
            )?);
        }
        evs.push(vars);
    }

    // Bus columns.
    let bus_ids = network.bus_ids();
    let mut buses = Vec::with_capacity(bus_ids.len());
    for &n in &bus_ids {
        let mut vars = BusVars {
            id: n,
            p_net: Vec::with_capacity(horizon),
            q_net: options.include_reactive.then(Vec::new),
            v: Vec::with_capacity(horizon),
            theta: Vec::with_capacity(horizon),
        };
        for t in 0..horizon {
            let s = suffix2(n, t);
            let free = (f64::NEG_INFINITY, f64::INFINITY);
            vars.p_net
                .push(m.add_var(format!("p_net({s})"), VarKind::Continuous, free.0, free.1)?);
            if let Some(q) = vars.q_net.as_mut() {
                q.push(m.add_var(format!("q_net({s})"), VarKind::Continuous, free.0, free.1)?);
            }
            vars.v
                .push(m.add_var(format!("v({s})"), VarKind::Continuous, free.0, free.1)?);
            vars.theta
                .push(m.add_var(format!("theta({s})"), VarKind::Continuous, free.0, free.1)?);
        }
        buses.push(vars);
    }

    // Charger-count columns (plan mode).
    let consumers = network.consumer_buses();
    let mut units = BTreeMap::new();
    if let BuildMode::Plan { .. } = mode {
        let class_max = fast_kw.into_iter().chain(slow_kw).fold(0.0, f64::max);
        for &n in &consumers {
            let parked = (0..scenario.evs.len())
                .filter(|&i| location[i].contains(&Some(n)))
                .count();
            for ty in catalog.types() {
                let ub = unit_upper_bound(parked, ty.power_per_port_kw, ty.ports, class_max);
                let id = m.add_var(
                    format!("n_units({},{})", n, ty.id),
                    VarKind::Integer,
                    0.0,
                    ub,
                )?;
                units.insert((n, ty.id.clone()), id);
            }
        }
    }

    // EV rows.
    for (i, ev) in scenario.evs.iter().enumerate() {
        let vars = &evs[i];
        let gain = ev.efficiency * dt / ev.battery_kwh;
        m.add_row(
            SOC_DYNAMICS,
            &suffix2(i, "init"),
            vec![(vars.soc[0], 1.0)],
            RowSense::Eq,
            ev.initial_soc,
        )?;
        for t in 0..horizon {
            let s = suffix2(i, t);
            m.add_row(
                SOC_DYNAMICS,
                &s,
                vec![
                    (vars.soc[t + 1], 1.0),
                    (vars.soc[t], -1.0),
                    (vars.power[t], -gain),
                ],
                RowSense::Eq,
                0.0,
            )?;
            m.add_row(
                PLUG_EXCLUSIVITY,
                &s,
                vec![(vars.x_fast[t], 1.0), (vars.x_slow[t], 1.0)],
                RowSense::Le,
                1.0,
            )?;
            m.add_row(
                CHARGE_IMPLIES_PLUG,
                &format!("{s},fast"),
                vec![(vars.y_fast[t], 1.0), (vars.x_fast[t], -1.0)],
                RowSense::Le,
                0.0,
            )?;
            m.add_row(
                CHARGE_IMPLIES_PLUG,
                &format!("{s},slow"),
                vec![(vars.y_slow[t], 1.0), (vars.x_slow[t], -1.0)],
                RowSense::Le,
                0.0,
            )?;
            let mut cap = vec![(vars.power[t], 1.0)];
            if let Some(kw) = fast_kw {
                cap.push((vars.y_fast[t], -kw));
            }
            if let Some(kw) = slow_kw {
                cap.push((vars.y_slow[t], -kw));
            }
            m.add_row(POWER_CAP_BY_TYPE, &s, cap, RowSense::Le, 0.0)?;
            if location[i][t].is_none() {
                m.add_row(
                    AWAY_DISCONNECT,
                    &format!("{s},fast"),
                    vec![(vars.x_fast[t], 1.0)],
                    RowSense::Eq,
                    0.0,
                )?;
                m.add_row(
                    AWAY_DISCONNECT,
                    &format!("{s},slow"),
                    vec![(vars.x_slow[t], 1.0)],
                    RowSense::Eq,
                    0.0,
                )?;
            }
        }
        for t in 0..=horizon {
            let s = suffix2(i, t);
            m.add_row(
                SOC_BOUNDS,
                &format!("{s},lo"),
                vec![(vars.soc[t], 1.0)],
                RowSense::Ge,
                options.soc_floor,
            )?;
            m.add_row(
                SOC_BOUNDS,
                &format!("{s},hi"),
                vec![(vars.soc[t], 1.0)],
                RowSense::Le,
                options.soc_ceiling,
            )?;
        }
        if let Some(last) = scenario.final_parking_step(i) {
            m.add_row(
                SOC_TERMINAL,
                &i.to_string(),
                vec![(vars.soc[last + 1], 1.0)],
                RowSense::Ge,
                options.soc_min_terminal,
            )?;
        }
    }

    // Network rows.
    let mut present: BTreeMap<(BusId, usize), Vec<usize>> = BTreeMap::new();
    for (i, locs) in location.iter().enumerate() {
        for (t, loc) in locs.iter().enumerate() {
            if let Some(n) = loc {
                present.entry((*n, t)).or_default().push(i);
            }
        }
    }
    let no_evs: Vec<usize> = Vec::new();

    for (b, bus) in network.buses.iter().enumerate() {
        let _ = b;
        let vars = buses
            .iter()
            .find(|v| v.id == bus.id)
            .expect("bus columns exist");
        let neighbors = network.neighbors(bus.id);
        let column = |id: BusId| buses.iter().find(|v| v.id == id).expect("neighbor exists");
        let consumer = network.is_consumer(bus.id);
        for t in 0..horizon {
            let s = suffix2(bus.id, t);
            let parked = present.get(&(bus.id, t)).unwrap_or(&no_evs);

            if !bus.is_slack {
                let (p_load, q_load) = if consumer {
                    scenario.base_load(bus.id, t)?
                } else {
                    (0.0, 0.0)
                };
                let mut terms = vec![(vars.p_net[t], 1.0)];
                terms.extend(parked.iter().map(|&i| (evs[i].power[t], 1.0 / base)));
                m.add_row(P_BALANCE, &s, terms, RowSense::Eq, -p_load / base)?;
                if let Some(q) = &vars.q_net {
                    m.add_row(Q_BALANCE, &s, vec![(q[t], 1.0)], RowSense::Eq, -q_load / base)?;
                }

                if consumer && !parked.is_empty() {
                    let ev_power: Vec<(VarId, f64)> =
                        parked.iter().map(|&i| (evs[i].power[t], 1.0)).collect();
                    let plugs: Vec<(VarId, f64)> = parked
                        .iter()
                        .flat_map(|&i| [(evs[i].x_fast[t], 1.0), (evs[i].x_slow[t], 1.0)])
                        .collect();
                    let rating = bus.transformer_kva;
                    m.add_row(
                        TRANSFORMER_LIMIT,
                        &s,
                        ev_power.clone(),
                        RowSense::Le,
                        rating - p_load,
                    )?;
                    match mode {
                        BuildMode::Plan { .. } => {
                            if options.enforce_capacity_coupling {
                                let mut terms = ev_power;
                                for ty in catalog.types() {
                                    let n_var = units[&(bus.id, ty.id.clone())];
                                    terms.push((n_var, -ty.unit_power_kw()));
                                }
                                m.add_row(NODAL_EV_POWER, &s, terms, RowSense::Le, 0.0)?;
                            }
                            let mut terms = plugs;
                            for ty in catalog.types() {
                                let n_var = units[&(bus.id, ty.id.clone())];
                                terms.push((n_var, -f64::from(ty.ports)));
                            }
                            m.add_row(PORT_LIMIT, &s, terms, RowSense::Le, 0.0)?;
                        }
                        BuildMode::Dispatch { plan, .. } => {
                            let cap = nodal_capacity(plan, catalog, bus.id)?;
                            if options.enforce_capacity_coupling {
                                m.add_row(NODAL_EV_POWER, &s, ev_power, RowSense::Le, cap.power_kw)?;
                            }
                            m.add_row(PORT_LIMIT, &s, plugs, RowSense::Le, f64::from(cap.ports))?;
                        }
                    }
                }
            }

            // P_n - sum_m [G (V_n - V_m) - B (th_n - th_m)] = 0
            let mut p_terms = vec![(vars.p_net[t], 1.0)];
            for &(other, g, bsus) in &neighbors {
                let o = column(other);
                p_terms.extend([
                    (vars.v[t], -g),
                    (o.v[t], g),
                    (vars.theta[t], bsus),
                    (o.theta[t], -bsus),
                ]);
            }
            m.add_row(FLOW_LINEAR, &format!("{s},p"), p_terms, RowSense::Eq, 0.0)?;
            if let Some(q) = &vars.q_net {
                // Q_n - sum_m [-B (V_n - V_m) - G (th_n - th_m)] = 0
                let mut q_terms = vec![(q[t], 1.0)];
                for &(other, g, bsus) in &neighbors {
                    let o = column(other);
                    q_terms.extend([
                        (vars.v[t], bsus),
                        (o.v[t], -bsus),
                        (vars.theta[t], g),
                        (o.theta[t], -g),
                    ]);
                }
                m.add_row(FLOW_LINEAR, &format!("{s},q"), q_terms, RowSense::Eq, 0.0)?;
            }

            if bus.is_slack {
                m.add_row(STATE_LIMITS, &format!("{s},v_fix"), vec![(vars.v[t], 1.0)], RowSense::Eq, 1.0)?;
                m.add_row(
                    STATE_LIMITS,
                    &format!("{s},theta_fix"),
                    vec![(vars.theta[t], 1.0)],
                    RowSense::Eq,
                    0.0,
                )?;
            } else {
                let limits = [
                    ("v_min", vars.v[t], RowSense::Ge, network.v_min),
                    ("v_max", vars.v[t], RowSense::Le, network.v_max),
                    ("theta_min", vars.theta[t], RowSense::Ge, network.theta_min),
                    ("theta_max", vars.theta[t], RowSense::Le, network.theta_max),
                ];
                for (tag, var, sense, rhs) in limits {
                    m.add_row(STATE_LIMITS, &format!("{s},{tag}"), vec![(var, 1.0)], sense, rhs)?;
                }
            }
        }
    }

    // Objective.
    match mode {
        BuildMode::Plan { epsilon } => {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            for ((_, ty), &var) in &units {
                terms.push((var, catalog.get(ty)?.unit_cost));
            }
            if *epsilon > 0.0 {
                for vars in &evs {
                    for t in 0..horizon {
                        terms.push((vars.x_fast[t], -epsilon));
                        terms.push((vars.x_slow[t], -epsilon));
                    }
                }
            }
            m.set_objective(ObjectiveSense::Minimize, terms, 0.0)?;
        }
        BuildMode::Dispatch { weights, .. } => {
            let mut terms = Vec::new();
            let mut constant = 0.0;
            for (ev, vars) in scenario.evs.iter().zip(&evs) {
                for t in 0..horizon {
                    terms.push((vars.soc[t], -weights.w1));
                }
                terms.push((vars.soc[horizon], -weights.w2));
                constant += ev.target_soc * (weights.w1 * horizon as f64 + weights.w2);
            }
            m.set_objective(ObjectiveSense::Minimize, terms, constant)?;
        }
    }

    Ok(BuiltModel {
        model: m,
        index: ModelIndex {
            horizon,
            evs,
            buses,
            units,
        },
    })
}

impl ModelIndex {
    pub fn trajectories(&self, values: &[f64]) -> Trajectories {
        let read = |ids: &[VarId]| ids.iter().map(|v| values[v.0]).collect::<Vec<f64>>();
        let on = |v: VarId| values[v.0] > 0.5;
        let plug = self
            .evs
            .iter()
            .map(|e| {
                (0..self.horizon)
                    .map(|t| {
                        if on(e.x_fast[t]) {
                            Plug::Fast
                        } else if on(e.x_slow[t]) {
                            Plug::Slow
                        } else {
                            Plug::None
                        }
                    })
                    .collect()
            })
            .collect();
        let charging = self
            .evs
            .iter()
            .map(|e| (0..self.horizon).map(|t| on(e.y_fast[t]) || on(e.y_slow[t])).collect())
            .collect();
        Trajectories {
            power_kw: self.evs.iter().map(|e| read(&e.power)).collect(),
            soc: self.evs.iter().map(|e| read(&e.soc)).collect(),
            plug,
            charging,
            buses: self.buses.iter().map(|b| b.id).collect(),
            p_net: self.buses.iter().map(|b| read(&b.p_net)).collect(),
            q_net: self
                .buses
                .iter()
                .map(|b| b.q_net.as_ref().map(|q| read(q)))
                .collect(),
            v: self.buses.iter().map(|b| read(&b.v)).collect(),
            theta: self.buses.iter().map(|b| read(&b.theta)).collect(),
        }
    }

    /// Charger counts from a solved plan-mode model, rounded to the nearest
    /// integer. Fails if any count is further than the integrality tolerance
    /// from an integer.
    pub fn extract_plan(&self, values: &[f64]) -> Result<InfrastructurePlan, f64> {
        let mut plan = InfrastructurePlan::new();
        for ((bus, ty), var) in &self.units {
            let value = values[var.0];
            let rounded = value.round();
            if (value - rounded).abs() > INTEGRALITY_TOL || rounded < 0.0 {
                return Err(value);
            }
            plan.set(*bus, ty, rounded as u32);
        }
        Ok(plan)
    }
}
