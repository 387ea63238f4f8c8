use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use evplan::builder::{build, BuildMode};
use evplan::grid::validate_network;
use evplan::metrics::{compare, nodal_power_matrix, power_shift, write_capex_csv, CapexPoint, Comparison};
use evplan::planner::{plan_infrastructure, plan_summary, PlanError, PlanOutcome, PlanSummary};
use evplan::scenario::generate_fleet;
use evplan::solver::{export_model, Backend, ExportFormat};
use evplan::{uniform_redistribute, Catalog, FleetScenario, GridNetwork, InfrastructurePlan, SolveStatus};

use crate::config::RunConfig;
use crate::output::{json_bytes, OutputDir};
use crate::{Command, Common, ConfigFailure};

/// Loads the config file named in `common` and applies the flag overrides.
/// With `sweep`, `--fleet` and `--battery` replace the sweep lists; otherwise
/// they take at most one value each.
pub fn resolve_config(common: &Common, sweep: bool) -> Result<RunConfig> {
    let inner = || -> Result<RunConfig> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &common.network {
            cfg.network = Some(p.clone());
        }
        if let Some(p) = &common.catalog {
            cfg.catalog = Some(p.clone());
        }
        if let Some(seed) = common.seed {
            cfg.scenario.seed = seed;
        }
        if let Some(gap) = common.gap {
            cfg.solver.relative_gap = gap;
        }
        if let Some(limit) = common.time_limit {
            cfg.solver.time_limit = Some(limit);
        }
        if let Some(exe) = &common.solver {
            cfg.solver.executable = Some(exe.clone());
        }
        if common.ablate_capacity_constraints {
            cfg.planner.enforce_capacity_coupling = false;
        }
        if sweep {
            if !common.fleet.is_empty() {
                cfg.sweep.fleet_sizes = common.fleet.clone();
            }
            if !common.battery.is_empty() {
                cfg.sweep.battery_kwh = common.battery.clone();
            }
        } else {
            match common.fleet.as_slice() {
                [] => {}
                [n] => cfg.scenario.n_evs = *n,
                _ => bail!("--fleet takes a single value outside `sweep`"),
            }
            match common.battery.as_slice() {
                [] => {}
                [b] => cfg.scenario.battery_kwh = *b,
                _ => bail!("--battery takes a single value outside `sweep`"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    };
    inner().context(ConfigFailure)
}

struct Inputs {
    cfg: RunConfig,
    network: GridNetwork,
    catalog: Catalog,
    backend: Box<dyn Backend>,
}

impl Inputs {
    fn load(common: &Common, sweep: bool) -> Result<Self> {
        let cfg = resolve_config(common, sweep)?;
        let network = cfg.network().context(ConfigFailure)?;
        let catalog = cfg.catalog().context(ConfigFailure)?;
        let backend = cfg.backend();
        Ok(Inputs {
            cfg,
            network,
            catalog,
            backend,
        })
    }

    fn scenario(&self, n_evs: usize, battery_kwh: f64) -> Result<FleetScenario> {
        let mut sc = self.cfg.scenario.clone();
        sc.n_evs = n_evs;
        sc.battery_kwh = battery_kwh;
        generate_fleet(&sc, &self.network).context(ConfigFailure)
    }

    fn default_scenario(&self) -> Result<FleetScenario> {
        self.scenario(self.cfg.scenario.n_evs, self.cfg.scenario.battery_kwh)
    }

    fn plan(&self, scenario: &FleetScenario) -> Result<PlanOutcome> {
        log::info!(
            "stage 1: {} EVs, {} kWh, seed {}",
            scenario.evs.len(),
            scenario.evs.first().map_or(self.cfg.scenario.battery_kwh, |e| e.battery_kwh),
            scenario.seed
        );
        let out = plan_infrastructure(
            scenario,
            &self.network,
            &self.catalog,
            &self.cfg.plan_options(),
            self.backend.as_ref(),
        )
        .context("stage 1 planning")?;
        log::info!(
            "stage 1: {} with CAPEX {} EUR, gap {:.4} in {:.1?}",
            out.solution.status,
            out.capex,
            out.solution.achieved_gap,
            out.solution.elapsed
        );
        Ok(out)
    }

    fn compare(&self, plan: &InfrastructurePlan, scenario: &FleetScenario) -> Result<(InfrastructurePlan, Comparison)> {
        let uniform = uniform_redistribute(plan, &self.network).context(ConfigFailure)?;
        let c = compare(
            plan,
            &uniform,
            scenario,
            &self.network,
            &self.catalog,
            &self.cfg.dispatch_options(),
            self.backend.as_ref(),
        )
        .context("stage 2 dispatch")?;
        log::info!(
            "stage 2: avg final SOC {:.2}% (optimal) vs {:.2}% (uniform), eta {:?}",
            c.report.avg_final_soc_o,
            c.report.avg_final_soc_u,
            c.report.eta
        );
        Ok((uniform, c))
    }

    fn read_plan(&self, path: &Path) -> Result<InfrastructurePlan> {
        let inner = || -> Result<InfrastructurePlan> {
            let file = std::fs::File::open(path).with_context(|| format!("opening plan {}", path.display()))?;
            let plan = InfrastructurePlan::read_csv(file).with_context(|| format!("reading plan {}", path.display()))?;
            plan.validate(&self.network, &self.catalog)?;
            Ok(plan)
        };
        inner().context(ConfigFailure)
    }

    fn metadata(&self, command: &str, extra: serde_json::Value) -> Result<Vec<u8>> {
        json_bytes(&json!({
            "tool": "evplan",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.cfg.scenario.seed,
            "backend": self.backend.name(),
            "config": self.cfg,
            "run": extra,
        }))
    }
}

fn plan_bytes(plan: &InfrastructurePlan) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    plan.write_csv(&mut buf)?;
    Ok(buf)
}

fn summary_bytes(summary: &PlanSummary) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    summary.write_csv(&mut buf)?;
    Ok(buf)
}

/// Writes the dispatch artifacts of a comparison into `out`.
fn write_comparison(out: &OutputDir, prefix: &str, scenario: &FleetScenario, network: &GridNetwork, c: &Comparison) -> Result<()> {
    out.write(format!("{prefix}report.json"), c.report.to_json())?;
    for (name, d) in [("optimal", &c.optimal), ("uniform", &c.uniform)] {
        out.write_with(format!("{prefix}dispatch_{name}.csv"), |w| d.write_ev_csv(scenario, w))?;
        out.write_with(format!("{prefix}nodes_{name}.csv"), |w| d.write_node_csv(w))?;
    }
    let mo = nodal_power_matrix(&c.optimal, scenario, network)?;
    let mu = nodal_power_matrix(&c.uniform, scenario, network)?;
    out.write_with(format!("{prefix}heatmap_optimal.csv"), |w| mo.write_csv(w))?;
    out.write_with(format!("{prefix}heatmap_uniform.csv"), |w| mu.write_csv(w))?;
    let shift = power_shift(&mu, &mo)?;
    out.write_with(format!("{prefix}shift.csv"), |w| shift.write_csv(w))?;
    Ok(())
}

fn solution_meta(out: &PlanOutcome) -> serde_json::Value {
    json!({
        "status": out.solution.status,
        "objective": out.solution.objective,
        "achieved_gap": out.solution.achieved_gap,
        "elapsed_s": out.solution.elapsed.as_secs_f64(),
    })
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Plan {
            common,
            output,
            uniform_baseline,
            export,
        } => {
            let inputs = Inputs::load(common, false)?;
            let scenario = inputs.default_scenario()?;
            let out = OutputDir::create(&output.out, output.force).context(ConfigFailure)?;
            if let Some(format) = export {
                let format = ExportFormat::from(*format);
                let built = build(
                    &scenario,
                    &inputs.network,
                    &inputs.catalog,
                    &BuildMode::Plan {
                        epsilon: inputs.cfg.planner.epsilon,
                    },
                    &inputs.cfg.plan_options().build_options(),
                )
                .context(ConfigFailure)?;
                out.write(format!("model.{}", format.extension()), export_model(&built.model, format)?)?;
            }
            let outcome = inputs.plan(&scenario)?;
            out.write("plan.csv", plan_bytes(&outcome.plan)?)?;
            out.write("summary.csv", summary_bytes(&plan_summary(&outcome.plan, &inputs.catalog)?)?)?;
            out.write("fleet.csv", scenario.dump())?;
            if *uniform_baseline {
                let uniform = uniform_redistribute(&outcome.plan, &inputs.network)?;
                out.write("plan_uniform.csv", plan_bytes(&uniform)?)?;
                out.write(
                    "summary_uniform.csv",
                    summary_bytes(&plan_summary(&uniform, &inputs.catalog)?)?,
                )?;
            }
            out.write("metadata.json", inputs.metadata("plan", json!({ "stage1": solution_meta(&outcome) }))?)?;
            let dir = out.commit()?;
            println!("plan: CAPEX {} EUR, {} units -> {}", outcome.capex, outcome.plan.total_units(), dir.display());
            Ok(())
        }
        Command::Validate { common, plan } => {
            let cfg = resolve_config(common, false)?;
            let network = match &cfg.network {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))
                        .context(ConfigFailure)?;
                    let doc: Result<GridNetwork> = evplan::load_network(&text).map_err(Into::into);
                    doc.with_context(|| format!("network {}", p.display())).context(ConfigFailure)?
                }
                None => evplan::bundled_cigre(),
            };
            let report = validate_network(&network);
            if !report.is_empty() {
                return Err(anyhow::anyhow!("invalid network: {report}").context(ConfigFailure));
            }
            println!(
                "network ok: {} buses, {} branches, {} consumer buses",
                network.buses.len(),
                network.branches.len(),
                network.consumer_buses().len()
            );
            if let Some(p) = plan {
                let catalog = cfg.catalog().context(ConfigFailure)?;
                let inputs = Inputs {
                    cfg,
                    network,
                    catalog,
                    backend: Box::new(evplan::HighsBackend::default()),
                };
                let plan = inputs.read_plan(p)?;
                let s = plan_summary(&plan, &inputs.catalog)?;
                println!("plan ok: {} units, {} ports, CAPEX {} EUR", s.units, s.ports, s.capex);
            }
            Ok(())
        }
        Command::Compare { common, output, plan } => {
            let inputs = Inputs::load(common, false)?;
            let scenario = inputs.default_scenario()?;
            let given = plan.as_ref().map(|p| inputs.read_plan(p)).transpose()?;
            let out = OutputDir::create(&output.out, output.force).context(ConfigFailure)?;
            let mut meta = serde_json::Map::new();
            let plan = match given {
                Some(p) => p,
                None => {
                    let outcome = inputs.plan(&scenario)?;
                    meta.insert("stage1".into(), solution_meta(&outcome));
                    outcome.plan
                }
            };
            let started = Instant::now();
            let (uniform, c) = inputs.compare(&plan, &scenario)?;
            meta.insert("stage2_elapsed_s".into(), json!(started.elapsed().as_secs_f64()));
            out.write("plan.csv", plan_bytes(&plan)?)?;
            out.write("summary.csv", summary_bytes(&plan_summary(&plan, &inputs.catalog)?)?)?;
            out.write("plan_uniform.csv", plan_bytes(&uniform)?)?;
            out.write("fleet.csv", scenario.dump())?;
            write_comparison(&out, "", &scenario, &inputs.network, &c)?;
            out.write("metadata.json", inputs.metadata("compare", serde_json::Value::Object(meta))?)?;
            let dir = out.commit()?;
            println!(
                "compare: avg final SOC {:.2}% vs {:.2}%, eta {} -> {}",
                c.report.avg_final_soc_o,
                c.report.avg_final_soc_u,
                c.report.eta.map_or("n/a".to_string(), |e| format!("{e:.2}%")),
                dir.display()
            );
            Ok(())
        }
        Command::Sweep {
            common,
            output,
            workers,
            plan_only,
        } => {
            let mut inputs = Inputs::load(common, true)?;
            if let Some(w) = workers {
                if *w == 0 {
                    return Err(anyhow::anyhow!("--workers must be >= 1").context(ConfigFailure));
                }
                inputs.cfg.sweep.workers = *w;
            }
            if *plan_only {
                inputs.cfg.sweep.compare = false;
            }
            let out = OutputDir::create(&output.out, output.force).context(ConfigFailure)?;
            let results = sweep_points_with(&inputs)?;
            let mut capex = Vec::new();
            let mut timings = Vec::new();
            for r in &results {
                for (name, bytes) in &r.files {
                    out.write(format!("{}/{name}", r.row.dir_name()), bytes)?;
                }
                if let Some(c) = r.row.capex {
                    capex.push(CapexPoint {
                        fleet_size: r.row.fleet_size,
                        battery_kwh: r.row.battery_kwh,
                        capex: c,
                        status: r.row.status,
                    });
                }
                timings.push(json!({
                    "fleet_size": r.row.fleet_size,
                    "battery_kwh": r.row.battery_kwh,
                    "elapsed_s": r.elapsed_s,
                }));
            }
            out.write_with("capex.csv", |w| write_capex_csv(&capex, w))?;
            let rows: Vec<SweepRow> = results.into_iter().map(|r| r.row).collect();
            out.write("sweep.csv", sweep_csv(&rows, &inputs.catalog))?;
            out.write("metadata.json", inputs.metadata("sweep", json!({ "points": timings }))?)?;
            let dir = out.commit()?;
            println!("sweep: {} points -> {}", rows.len(), dir.display());
            Ok(())
        }
        Command::Ablate { common, output } => {
            let mut inputs = Inputs::load(common, false)?;
            let scenario = inputs.default_scenario()?;
            let out = OutputDir::create(&output.out, output.force).context(ConfigFailure)?;
            let mut table = String::from("variant,status");
            for t in inputs.catalog.types() {
                table.push(',');
                table.push_str(&t.id);
            }
            table.push_str(",units,ports,capex_eur\n");
            let mut meta = serde_json::Map::new();
            for (variant, coupling) in [("with", true), ("without", false)] {
                inputs.cfg.planner.enforce_capacity_coupling = coupling;
                let outcome = inputs.plan(&scenario)?;
                let s = plan_summary(&outcome.plan, &inputs.catalog)?;
                out.write(format!("{variant}/plan.csv"), plan_bytes(&outcome.plan)?)?;
                out.write(format!("{variant}/summary.csv"), summary_bytes(&s)?)?;
                table.push_str(&format!("{variant},{}", outcome.solution.status));
                for n in s.per_type.values() {
                    table.push_str(&format!(",{n}"));
                }
                table.push_str(&format!(",{},{},{}\n", s.units, s.ports, s.capex));
                meta.insert(variant.into(), solution_meta(&outcome));
            }
            out.write("ablation.csv", table)?;
            out.write("metadata.json", inputs.metadata("ablate", serde_json::Value::Object(meta))?)?;
            let dir = out.commit()?;
            println!("ablate -> {}", dir.display());
            Ok(())
        }
        Command::ExportModel {
            common,
            output,
            plan,
            export,
        } => {
            let inputs = Inputs::load(common, false)?;
            let scenario = inputs.default_scenario()?;
            let (mode, options) = match plan {
                Some(p) => (
                    BuildMode::Dispatch {
                        plan: inputs.read_plan(p)?,
                        weights: inputs.cfg.dispatch_options().weights,
                    },
                    inputs.cfg.dispatch_options().build,
                ),
                None => (
                    BuildMode::Plan {
                        epsilon: inputs.cfg.planner.epsilon,
                    },
                    inputs.cfg.plan_options().build_options(),
                ),
            };
            let built = build(&scenario, &inputs.network, &inputs.catalog, &mode, &options).context(ConfigFailure)?;
            let format = ExportFormat::from(*export);
            let out = OutputDir::create(&output.out, output.force).context(ConfigFailure)?;
            out.write(format!("model.{}", format.extension()), export_model(&built.model, format)?)?;
            out.write("groups.json", json_bytes(&built.model.group_counts())?)?;
            out.write(
                "metadata.json",
                inputs.metadata(
                    "export-model",
                    json!({
                        "variables": built.model.num_vars(),
                        "rows": built.model.num_rows(),
                        "integral": built.model.num_integral(),
                    }),
                )?,
            )?;
            let dir = out.commit()?;
            println!(
                "export-model: {} variables, {} rows -> {}",
                built.model.num_vars(),
                built.model.num_rows(),
                dir.display()
            );
            Ok(())
        }
    }
}

/// One sweep point as it appears in `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub fleet_size: usize,
    pub battery_kwh: f64,
    pub status: SolveStatus,
    pub per_type: BTreeMap<String, u32>,
    pub units: Option<u32>,
    pub ports: Option<u32>,
    pub capex: Option<f64>,
    pub avg_final_soc_o: Option<f64>,
    pub avg_final_soc_u: Option<f64>,
    pub shortfall_o: Option<f64>,
    pub shortfall_u: Option<f64>,
    pub eta: Option<f64>,
}

impl SweepRow {
    pub fn dir_name(&self) -> String {
        format!("fleet{}_battery{}", self.fleet_size, self.battery_kwh)
    }
}

struct PointResult {
    row: SweepRow,
    files: Vec<(String, Vec<u8>)>,
    elapsed_s: f64,
}

fn run_point(inputs: &Inputs, fleet: usize, battery: f64) -> Result<PointResult> {
    let started = Instant::now();
    let scenario = inputs.scenario(fleet, battery)?;
    let mut row = SweepRow {
        fleet_size: fleet,
        battery_kwh: battery,
        status: SolveStatus::Infeasible,
        per_type: BTreeMap::new(),
        units: None,
        ports: None,
        capex: None,
        avg_final_soc_o: None,
        avg_final_soc_u: None,
        shortfall_o: None,
        shortfall_u: None,
        eta: None,
    };
    let mut files = Vec::new();
    let outcome = match inputs.plan(&scenario) {
        Ok(o) => o,
        Err(e) => {
            match e.downcast_ref::<PlanError>() {
                Some(PlanError::Infeasible) => row.status = SolveStatus::Infeasible,
                Some(PlanError::NoSolution(s)) => row.status = *s,
                _ => return Err(e.context(format!("sweep point {fleet} EVs / {battery} kWh"))),
            }
            log::warn!("sweep point {fleet} EVs / {battery} kWh: {}", row.status);
            return Ok(PointResult {
                row,
                files,
                elapsed_s: started.elapsed().as_secs_f64(),
            });
        }
    };
    let s = plan_summary(&outcome.plan, &inputs.catalog)?;
    row.status = outcome.solution.status;
    row.per_type = s.per_type.clone();
    row.units = Some(s.units);
    row.ports = Some(s.ports);
    row.capex = Some(s.capex);
    files.push(("plan.csv".into(), plan_bytes(&outcome.plan)?));
    files.push(("summary.csv".into(), summary_bytes(&s)?));
    if inputs.cfg.sweep.compare {
        let (uniform, c) = inputs
            .compare(&outcome.plan, &scenario)
            .with_context(|| format!("sweep point {fleet} EVs / {battery} kWh"))?;
        row.avg_final_soc_o = Some(c.report.avg_final_soc_o);
        row.avg_final_soc_u = Some(c.report.avg_final_soc_u);
        row.shortfall_o = Some(c.report.shortfall_o);
        row.shortfall_u = Some(c.report.shortfall_u);
        row.eta = c.report.eta;
        files.push(("plan_uniform.csv".into(), plan_bytes(&uniform)?));
        files.push(("report.json".into(), c.report.to_json().into_bytes()));
    }
    Ok(PointResult {
        row,
        files,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

fn sweep_points_with(inputs: &Inputs) -> Result<Vec<PointResult>> {
    let grid: Vec<(usize, f64)> = inputs
        .cfg
        .sweep
        .battery_kwh
        .iter()
        .flat_map(|&b| inputs.cfg.sweep.fleet_sizes.iter().map(move |&n| (n, b)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inputs.cfg.sweep.workers)
        .build()?;
    pool.install(|| grid.par_iter().map(|&(n, b)| run_point(inputs, n, b)).collect())
}

/// Runs every sweep point of `cfg` and returns the table rows in
/// battery-major order.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let inputs = Inputs {
        network: cfg.network()?,
        catalog: cfg.catalog()?,
        backend: cfg.backend(),
        cfg: cfg.clone(),
    };
    Ok(sweep_points_with(&inputs)?.into_iter().map(|r| r.row).collect())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn opt_f(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{:.6}", x + 0.0))
}

fn sweep_csv(rows: &[SweepRow], catalog: &Catalog) -> String {
    let mut out = String::from("fleet_size,battery_kwh,status");
    for t in catalog.types() {
        out.push(',');
        out.push_str(&t.id);
    }
    out.push_str(",units,ports,capex_eur,avg_final_soc_o,avg_final_soc_u,shortfall_o,shortfall_u,eta\n");
    for r in rows {
        out.push_str(&format!("{},{},{}", r.fleet_size, r.battery_kwh, r.status));
        for t in catalog.types() {
            out.push(',');
            if r.units.is_some() {
                out.push_str(&r.per_type.get(&t.id).copied().unwrap_or(0).to_string());
            }
        }
        out.push_str(&format!(
            ",{},{},{},{},{},{},{},{}\n",
            opt(r.units),
            opt(r.ports),
            opt(r.capex),
            opt_f(r.avg_final_soc_o),
            opt_f(r.avg_final_soc_u),
            opt_f(r.shortfall_o),
            opt_f(r.shortfall_u),
            opt_f(r.eta)
        ));
    }
    out
}
