//! Run configuration file: one TOML document whose sections mirror the
//! library options. Command-line flags override file values.
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use evplan::builder::BuildOptions;
use evplan::scenario::ScenarioConfig;
use evplan::solver::{Backend, ExternalBackend, HighsBackend, SolveOptions, SOLVER_ARGS_ENV};
use evplan::{Catalog, DispatchOptions, DispatchWeights, GridNetwork, PlanOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub epsilon: f64,
    pub soc_min_terminal: f64,
    pub include_reactive: bool,
    pub enforce_capacity_coupling: bool,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let p = PlanOptions::default();
        PlannerSection {
            epsilon: p.epsilon,
            soc_min_terminal: p.soc_min_terminal,
            include_reactive: p.include_reactive,
            enforce_capacity_coupling: p.enforce_capacity_coupling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispatchSection {
    pub w1: f64,
    pub w2: f64,
    pub soc_floor: f64,
}

impl Default for DispatchSection {
    fn default() -> Self {
        let w = DispatchWeights::default();
        DispatchSection {
            w1: w.w1,
            w2: w.w2,
            soc_floor: BuildOptions::dispatch().soc_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub relative_gap: f64,
    pub time_limit: Option<f64>,
    pub threads: usize,
    pub random_seed: u32,
    /// Solver executable; when set, models are solved out of process.
    pub executable: Option<PathBuf>,
    /// Command template for `executable`.
    pub command: Option<String>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolveOptions::default();
        SolverSection {
            relative_gap: s.relative_gap,
            time_limit: s.time_limit,
            threads: s.threads,
            random_seed: s.random_seed,
            executable: None,
            command: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub fleet_sizes: Vec<usize>,
    pub battery_kwh: Vec<f64>,
    /// Worker threads for sweep points.
    pub workers: usize,
    /// Also run the two dispatches and the uniform comparison per point.
    pub compare: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            fleet_sizes: vec![250, 350, 450, 550, 600],
            battery_kwh: vec![20.0, 40.0],
            workers: 1,
            compare: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Network document; the bundled CIGRE feeder when absent.
    pub network: Option<PathBuf>,
    /// Catalog document; the four default charger types when absent.
    pub catalog: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub planner: PlannerSection,
    pub dispatch: DispatchSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.network, &mut cfg.catalog].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        // A bare executable name is looked up on PATH.
        if let Some(exe) = &mut cfg.solver.executable {
            if exe.is_relative() && exe.components().count() > 1 {
                *exe = base.join(&*exe);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.fleet_sizes.is_empty() || self.sweep.battery_kwh.is_empty() {
            bail!("sweep lists must be nonempty");
        }
        if self.sweep.workers == 0 {
            bail!("sweep.workers must be >= 1");
        }
        for p in [&self.network, &self.catalog].into_iter().flatten() {
            if !p.exists() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        self.solve_options().validate()?;
        self.dispatch_options().weights.validate()?;
        Ok(())
    }

    pub fn network(&self) -> Result<GridNetwork> {
        match &self.network {
            Some(p) => evplan::load_network_file(p).with_context(|| format!("loading network {}", p.display())),
            None => Ok(evplan::bundled_cigre()),
        }
    }

    pub fn catalog(&self) -> Result<Catalog> {
        match &self.catalog {
            Some(p) => Catalog::load_file(p).with_context(|| format!("loading catalog {}", p.display())),
            None => Ok(evplan::default_catalog()),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            relative_gap: self.solver.relative_gap,
            time_limit: self.solver.time_limit,
            threads: self.solver.threads,
            random_seed: self.solver.random_seed,
        }
    }

    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            epsilon: self.planner.epsilon,
            solve: self.solve_options(),
            soc_min_terminal: self.planner.soc_min_terminal,
            enforce_capacity_coupling: self.planner.enforce_capacity_coupling,
            include_reactive: self.planner.include_reactive,
        }
    }

    pub fn dispatch_options(&self) -> DispatchOptions {
        DispatchOptions {
            weights: DispatchWeights {
                w1: self.dispatch.w1,
                w2: self.dispatch.w2,
            },
            solve: self.solve_options(),
            build: BuildOptions {
                soc_floor: self.dispatch.soc_floor,
                include_reactive: self.planner.include_reactive,
                ..BuildOptions::dispatch()
            },
        }
    }

    pub fn backend(&self) -> Box<dyn Backend> {
        match &self.solver.executable {
            Some(exe) => {
                let mut b = ExternalBackend::new(exe);
                let template = self.solver.command.clone().or_else(|| std::env::var(SOLVER_ARGS_ENV).ok());
                if let Some(t) = template {
                    b = b.with_template(t);
                }
                Box::new(b)
            }
            None => Box::new(HighsBackend::default()),
        }
    }
}
