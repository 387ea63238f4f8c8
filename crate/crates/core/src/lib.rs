//! Two-stage planning and validation of EV charging infrastructure on a
//! medium-voltage distribution network.
//!
//! Stage 1 ([`planner`]) chooses integer charger counts per bus at minimum
//! capital cost, subject to fleet charging needs and linearized power-flow
//! limits. Stage 2 ([`dispatch`]) fixes a plan and schedules the fleet to
//! get as close to target state of charge as possible. [`metrics`] compares
//! a plan against its uniform redistribution.
// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod catalog;
pub mod dispatch;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod planner;
pub mod scenario;
pub mod solver;

pub use builder::{build, BuildMode, BuildOptions, BuiltModel};
pub use catalog::{capex, default_catalog, Catalog, ChargerType, InfrastructurePlan, SpeedClass};
pub use dispatch::{dispatch, uniform_redistribute, DispatchOptions, DispatchSolution, DispatchWeights};
pub use grid::{bundled_cigre, load_network, load_network_file, BusId, GridNetwork};
pub use metrics::{compare, shortfall, shortfall_reduction, ComparisonReport};
pub use model::MilpModel;
pub use planner::{plan_infrastructure, plan_summary, PlanOptions, PlanOutcome, PlanSummary};
pub use scenario::{generate_fleet, FleetScenario, ScenarioConfig};
pub use solver::{Backend, HighsBackend, Solution, SolveOptions, SolveStatus};
