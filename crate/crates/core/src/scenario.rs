//! Deterministic commute-structured EV fleet scenarios.
//!
//! Each EV gets a residential and a workplace bus, is available at home
//! during the night window and at work during the day window, and is away
//! otherwise. Random draws come from ChaCha8 seeded with the scenario seed;
//! uniform variates are built from the top 53 bits of each 64-bit output
//! (`u = (x >> 11) * 2^-53`), so a given seed yields the same fleet on
//! every platform. Per EV the draw order is home bus, work bus, initial SOC.
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BusId, GridNetwork};

/// Normalized 24-hour base-load shape: morning and evening residential peaks
/// with a commercial midday plateau. Index = clock hour.
pub const DEFAULT_LOAD_PROFILE: [f64; 24] = [
    0.45, 0.40, 0.38, 0.36, 0.37, 0.42, 0.55, 0.75, 0.90, 0.85, 0.80, 0.82, 0.85, 0.80, 0.75,
    0.72, 0.78, 0.90, 1.00, 0.98, 0.90, 0.78, 0.65, 0.52,
];

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("need at least 2 consumer buses, network has {0}")]
    TooFewConsumers(usize),
    #[error("battery capacity must be positive, got {0} kWh")]
    InvalidBattery(f64),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("unknown EV {0}")]
    UnknownEv(usize),
    #[error("time step {t} outside horizon of {horizon} steps")]
    StepOutOfRange { t: usize, horizon: usize },
    #[error("bus {0} is not a consumer bus")]
    NotConsumer(BusId),
    #[error("EV {id}: {reason}")]
    InvalidEv { id: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub step_hours: f64,
    pub horizon_steps: usize,
    pub start_hour: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            step_hours: 1.0,
            horizon_steps: 24,
            start_hour: 0.0,
        }
    }
}

impl TimeGrid {
    /// A 24-hour grid of `steps` equal intervals starting at midnight.
    pub fn day(steps: usize) -> Self {
        TimeGrid {
            step_hours: 24.0 / steps as f64,
            horizon_steps: steps,
            start_hour: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.step_hours > 0.0) || self.horizon_steps == 0 {
            return Err(ScenarioError::InvalidTimeGrid(
                "step length and horizon must be positive".into(),
            ));
        }
        if self.step_hours * self.horizon_steps as f64 > 24.0 + 1e-9 {
            return Err(ScenarioError::InvalidTimeGrid(format!(
                "{} steps of {} h exceed one day",
                self.horizon_steps, self.step_hours
            )));
        }
        Ok(())
    }

    /// Clock hour in `[0, 24)` at the start of step `t`.
    pub fn clock_hour(&self, t: usize) -> f64 {
        (self.start_hour + t as f64 * self.step_hours).rem_euclid(24.0)
    }
}

/// A daily clock window `[start, end)`; wraps past midnight when `end <= start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start_hour: f64,
    pub end_hour: f64,
}

impl Window {
    pub const fn new(start_hour: f64, end_hour: f64) -> Self {
        Window {
            start_hour,
            end_hour,
        }
    }

    pub fn contains(&self, hour: f64) -> bool {
        if self.start_hour < self.end_hour {
            hour >= self.start_hour && hour < self.end_hour
        } else {
            hour >= self.start_hour || hour < self.end_hour
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Windows {
    pub home: Window,
    pub work: Window,
}

impl Default for Windows {
    fn default() -> Self {
        Windows {
            home: Window::new(22.0, 6.0),
            work: Window::new(8.0, 18.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvProfile {
    pub id: usize,
    pub battery_kwh: f64,
    pub home_node: BusId,
    pub work_node: BusId,
    pub initial_soc: f64,
    pub target_soc: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    At(BusId),
    Away,
}

/// Conventional demand: `P = peak_fraction * rating * profile(hour)`,
/// `Q = P * tan(acos(pf))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseLoad {
    pub peak_fraction: f64,
    pub power_factor: f64,
    pub profile: Vec<f64>,
}

impl Default for BaseLoad {
    fn default() -> Self {
        BaseLoad {
            peak_fraction: 0.40,
            power_factor: 0.95,
            profile: DEFAULT_LOAD_PROFILE.to_vec(),
        }
    }
}

impl BaseLoad {
    pub fn none() -> Self {
        BaseLoad {
            peak_fraction: 0.0,
            ..BaseLoad::default()
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.profile.len() != 24 {
            return Err(ScenarioError::InvalidConfig(format!(
                "load profile needs 24 hourly values, got {}",
                self.profile.len()
            )));
        }
        if self.profile.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ScenarioError::InvalidConfig(
                "load profile values must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.peak_fraction) {
            return Err(ScenarioError::InvalidConfig(
                "peak_fraction must lie in [0, 1]".into(),
            ));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(ScenarioError::InvalidConfig(
                "power_factor must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn q_over_p(&self) -> f64 {
        self.power_factor.acos().tan()
    }
}

/// Scenario configuration file section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_evs: usize,
    pub battery_kwh: f64,
    pub seed: u64,
    pub peak_fraction: f64,
    pub power_factor: f64,
    pub profile: Vec<f64>,
    pub home_nodes: Option<Vec<BusId>>,
    pub work_nodes: Option<Vec<BusId>>,
    pub windows: Windows,
    pub efficiency: f64,
    pub target_soc: f64,
    pub initial_soc_range: (f64, f64),
    pub time: TimeGrid,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let load = BaseLoad::default();
        ScenarioConfig {
            n_evs: 250,
            battery_kwh: 40.0,
            seed: 0,
            peak_fraction: load.peak_fraction,
            power_factor: load.power_factor,
            profile: load.profile,
            home_nodes: None,
            work_nodes: None,
            windows: Windows::default(),
            efficiency: 0.85,
            target_soc: 1.0,
            initial_soc_range: (0.10, 0.40),
            time: TimeGrid::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn new(n_evs: usize, battery_kwh: f64, seed: u64) -> Self {
        ScenarioConfig {
            n_evs,
            battery_kwh,
            seed,
            ..ScenarioConfig::default()
        }
    }

    pub fn base_load(&self) -> BaseLoad {
        BaseLoad {
            peak_fraction: self.peak_fraction,
            power_factor: self.power_factor,
            profile: self.profile.clone(),
        }
    }
}

/// An immutable fleet plus the time grid and base load it is evaluated against.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetScenario {
    pub evs: Vec<EvProfile>,
    pub time: TimeGrid,
    pub windows: Windows,
    pub base_load: BaseLoad,
    pub seed: u64,
    /// Transformer rating of every consumer bus, kVA.
    ratings: BTreeMap<BusId, f64>,
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn pick(rng: &mut ChaCha8Rng, nodes: &[BusId]) -> BusId {
    let idx = (uniform01(rng) * nodes.len() as f64) as usize;
    nodes[idx.min(nodes.len() - 1)]
}

/// Residential/workplace split: consumer buses in ascending id order, the
/// first half (rounded up) residential.
pub fn default_partition(network: &GridNetwork) -> (Vec<BusId>, Vec<BusId>) {
    let consumers = network.consumer_buses();
    let split = consumers.len().div_ceil(2);
    (consumers[..split].to_vec(), consumers[split..].to_vec())
}

pub fn generate_fleet(
    config: &ScenarioConfig,
    network: &GridNetwork,
) -> Result<FleetScenario, ScenarioError> {
    let consumers = network.consumer_buses();
    if consumers.len() < 2 {
        return Err(ScenarioError::TooFewConsumers(consumers.len()));
    }
    if !(config.battery_kwh > 0.0) {
        return Err(ScenarioError::InvalidBattery(config.battery_kwh));
    }
    let (lo, hi) = config.initial_soc_range;
    if !(0.0 <= lo && lo <= hi && hi <= config.target_soc && config.target_soc <= 1.0) {
        return Err(ScenarioError::InvalidConfig(
            "need 0 <= initial SOC range <= target SOC <= 1".into(),
        ));
    }

    let (default_home, default_work) = default_partition(network);
    let home_nodes = config.home_nodes.clone().unwrap_or(default_home);
    let work_nodes = config.work_nodes.clone().unwrap_or(default_work);
    if home_nodes.is_empty() || work_nodes.is_empty() {
        return Err(ScenarioError::InvalidConfig(
            "residential and workplace node sets must be nonempty".into(),
        ));
    }
    for &n in home_nodes.iter().chain(&work_nodes) {
        if !network.is_consumer(n) {
            return Err(ScenarioError::NotConsumer(n));
        }
    }
    if home_nodes.iter().any(|n| work_nodes.contains(n)) {
        return Err(ScenarioError::InvalidConfig(
            "residential and workplace node sets must be disjoint".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let evs = (0..config.n_evs)
        .map(|id| {
            let home_node = pick(&mut rng, &home_nodes);
            let work_node = pick(&mut rng, &work_nodes);
            let initial_soc = lo + (hi - lo) * uniform01(&mut rng);
            EvProfile {
                id,
                battery_kwh: config.battery_kwh,
                home_node,
                work_node,
                initial_soc,
                target_soc: config.target_soc,
                efficiency: config.efficiency,
            }
        })
        .collect();

    FleetScenario::new(
        evs,
        config.time,
        config.windows,
        config.base_load(),
        network,
        config.seed,
    )
}

impl FleetScenario {
    /// Assembles a scenario from explicit EVs, validating every invariant.
    pub fn new(
        evs: Vec<EvProfile>,
        time: TimeGrid,
        windows: Windows,
        base_load: BaseLoad,
        network: &GridNetwork,
        seed: u64,
    ) -> Result<Self, ScenarioError> {
        time.validate()?;
        base_load.validate()?;
        for (idx, ev) in evs.iter().enumerate() {
            let fail = |reason: &str| ScenarioError::InvalidEv {
                id: ev.id,
                reason: reason.to_string(),
            };
            if ev.id != idx {
                return Err(fail("EV ids must be 0..n in order"));
            }
            if !(ev.battery_kwh > 0.0) {
                return Err(ScenarioError::InvalidBattery(ev.battery_kwh));
            }
            if !(0.0 <= ev.initial_soc && ev.initial_soc <= ev.target_soc && ev.target_soc <= 1.0)
            {
                return Err(fail("need 0 <= initial SOC <= target SOC <= 1"));
            }
            if ev.home_node == ev.work_node {
                return Err(fail("home and work bus coincide"));
            }
            for n in [ev.home_node, ev.work_node] {
                if !network.is_consumer(n) {
                    return Err(ScenarioError::NotConsumer(n));
                }
            }
            if !(ev.efficiency > 0.0 && ev.efficiency <= 1.0) {
                return Err(fail("efficiency must lie in (0, 1]"));
            }
        }
        let ratings = network
            .consumer_buses()
            .into_iter()
            .map(|id| (id, network.bus(id).expect("consumer exists").transformer_kva))
            .collect();
        Ok(FleetScenario {
            evs,
            time,
            windows,
            base_load,
            seed,
            ratings,
        })
    }

    pub fn horizon(&self) -> usize {
        self.time.horizon_steps
    }

    fn check_step(&self, t: usize) -> Result<(), ScenarioError> {
        if t >= self.horizon() {
            Err(ScenarioError::StepOutOfRange {
                t,
                horizon: self.horizon(),
            })
        } else {
            Ok(())
        }
    }

    pub fn availability(&self, ev: usize, t: usize) -> Result<Location, ScenarioError> {
        let profile = self.evs.get(ev).ok_or(ScenarioError::UnknownEv(ev))?;
        self.check_step(t)?;
        let hour = self.time.clock_hour(t);
        Ok(if self.windows.home.contains(hour) {
            Location::At(profile.home_node)
        } else if self.windows.work.contains(hour) {
            Location::At(profile.work_node)
        } else {
            Location::Away
        })
    }

    /// Bus where `ev` is parked at step `t`, if any. Panics on bad indices.
    pub fn location(&self, ev: usize, t: usize) -> Option<BusId> {
        match self.availability(ev, t).expect("valid ev and step") {
            Location::At(n) => Some(n),
            Location::Away => None,
        }
    }

    /// Last step of the EV's final parking session.
    pub fn final_parking_step(&self, ev: usize) -> Option<usize> {
        (0..self.horizon())
            .rev()
            .find(|&t| self.location(ev, t).is_some())
    }

    /// EVs parked at `node` during step `t`, ascending by id.
    pub fn evs_at(&self, node: BusId, t: usize) -> Vec<usize> {
        (0..self.evs.len())
            .filter(|&i| self.location(i, t) == Some(node))
            .collect()
    }

    /// Base demand `(P kW, Q kVAr)` at a consumer bus.
    pub fn base_load(&self, node: BusId, t: usize) -> Result<(f64, f64), ScenarioError> {
        let rating = *self
            .ratings
            .get(&node)
            .ok_or(ScenarioError::NotConsumer(node))?;
        self.check_step(t)?;
        let hour = self.time.clock_hour(t).floor() as usize % 24;
        let p = self.base_load.peak_fraction * rating * self.base_load.profile[hour];
        Ok((p, p * self.base_load.q_over_p()))
    }

    pub fn consumer_buses(&self) -> Vec<BusId> {
        self.ratings.keys().copied().collect()
    }

    /// Tabular audit dump of the fleet.
    pub fn dump(&self) -> String {
        let mut out =
            String::from("ev,battery_kwh,home_node,work_node,initial_soc,target_soc,efficiency\n");
        for ev in &self.evs {
            writeln!(
                out,
                "{},{},{},{},{:.17},{},{}",
                ev.id,
                ev.battery_kwh,
                ev.home_node,
                ev.work_node,
                ev.initial_soc,
                ev.target_soc,
                ev.efficiency
            )
            .expect("writing to string");
        }
        out
    }
}
