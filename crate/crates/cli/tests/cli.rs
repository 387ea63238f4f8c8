//! End-to-end runs of the `evplan` binary.
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evplan::solver::parse_mps;
use evplan::{Catalog, ChargerType, InfrastructurePlan, SpeedClass};

fn evplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evplan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn slow_only_catalog(dir: &Path) -> PathBuf {
    let cat = Catalog::new(vec![ChargerType {
        id: "slow".into(),
        speed: SpeedClass::Slow,
        power_per_port_kw: 7.5,
        ports: 1,
        unit_cost: 1500.0,
    }])
    .unwrap();
    let path = dir.join("catalog.toml");
    fs::write(&path, cat.to_document()).unwrap();
    path
}

#[test]
fn plan_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = evplan(&["plan", "--fleet", "4", "--battery", "20", "--seed", "3", "--uniform-baseline", "--export", "mps", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["plan.csv", "summary.csv", "plan_uniform.csv", "summary_uniform.csv", "fleet.csv", "model.mps", "metadata.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let plan = InfrastructurePlan::read_csv(fs::File::open(out.join("plan.csv")).unwrap()).unwrap();
    let uniform = InfrastructurePlan::read_csv(fs::File::open(out.join("plan_uniform.csv")).unwrap()).unwrap();
    assert_eq!(plan.type_totals(), uniform.type_totals());
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["config"]["scenario"]["n_evs"], 4);
    let mps = parse_mps(&fs::read_to_string(out.join("model.mps")).unwrap()).unwrap();
    assert!(mps.columns.iter().any(|c| c.name.starts_with("n_units")));
}

#[test]
fn compare_on_a_given_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.csv");
    fs::write(&plan_path, "bus,type,count\n2,slow_single,3\n").unwrap();
    let out = dir.path().join("cmp");
    let o = evplan(&["compare", "--fleet", "6", "--battery", "40", "--plan", s(&plan_path), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: evplan::ComparisonReport =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.n_evs, 6);
    assert_eq!(report.capex, 4500.0);
    for f in ["dispatch_optimal.csv", "dispatch_uniform.csv", "heatmap_optimal.csv", "heatmap_uniform.csv", "shift.csv", "nodes_optimal.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let ev_csv = fs::read_to_string(out.join("dispatch_optimal.csv")).unwrap();
    assert!(ev_csv.starts_with("# ev_dispatch v1\nev,t,node,state,p_kw,soc\n"));
}

#[test]
fn config_errors_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[planner]\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&evplan(&["plan", "--config", s(&cfg), "--out", s(&out)])), 2);
    assert_eq!(code(&evplan(&["plan", "--gap", "-1", "--out", s(&out)])), 2);
    assert_eq!(code(&evplan(&["plan", "--fleet", "1,2", "--out", s(&out)])), 2);
    assert_eq!(code(&evplan(&["plan", "--network", "/no/such.toml", "--out", s(&out)])), 2);
    assert_eq!(code(&evplan(&["plan", "--bogus-flag"])), 2);
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let args = ["export-model", "--fleet", "2", "--out", s(&out)];
    assert_eq!(code(&evplan(&args)), 2);
    assert!(out.join("keep.txt").exists());
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&evplan(&forced)), 0);
    assert!(!out.join("keep.txt").exists());
    assert!(out.join("model.mps").exists());
}

#[test]
fn infeasible_plan_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = slow_only_catalog(dir.path());
    let cfg = dir.path().join("tight.toml");
    fs::write(
        &cfg,
        format!(
            "catalog = \"{}\"\n\n[scenario]\nn_evs = 3\nbattery_kwh = 40.0\n\
             [scenario.windows.home]\nstart_hour = 22.0\nend_hour = 23.0\n\
             [scenario.windows.work]\nstart_hour = 8.0\nend_hour = 9.0\n\n\
             [planner]\nsoc_min_terminal = 1.0\n",
            catalog.file_name().unwrap().to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = evplan(&["plan", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn missing_solver_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = evplan(&["plan", "--fleet", "2", "--solver", "/no/such/solver", "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn validate_reports_network_problems() {
    let o = evplan(&["validate"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("network ok: 14 buses"));

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("net.toml");
    fs::write(&broken, evplan::grid::bundled_cigre_document().replace("v_min = 0.95", "v_min = 1.1")).unwrap();
    let o = evplan(&["validate", "--network", s(&broken)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("v_min < 1.0 fails"));

    let plan = dir.path().join("plan.csv");
    fs::write(&plan, "bus,type,count\n0,slow_single,1\n").unwrap();
    assert_eq!(code(&evplan(&["validate", "--plan", s(&plan)])), 2);
    fs::write(&plan, "bus,type,count\n2,slow_multi,2\n").unwrap();
    let o = evplan(&["validate", "--plan", s(&plan)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 units, 8 ports, CAPEX 10000 EUR"));
}

#[test]
fn export_model_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("lp");
    assert_eq!(code(&evplan(&["export-model", "--fleet", "3", "--export", "lp", "--out", s(&lp)])), 0);
    let text = fs::read_to_string(lp.join("model.lp")).unwrap();
    assert!(text.contains("Minimize") || text.contains("minimize"));
    let groups: serde_json::Value = serde_json::from_slice(&fs::read(lp.join("groups.json")).unwrap()).unwrap();
    assert!(groups["port_limit"].as_u64().unwrap() > 0);

    let plan = dir.path().join("plan.csv");
    fs::write(&plan, "bus,type,count\n2,slow_single,1\n").unwrap();
    let mps = dir.path().join("mps");
    assert_eq!(code(&evplan(&["export-model", "--fleet", "3", "--plan", s(&plan), "--out", s(&mps)])), 0);
    let model = parse_mps(&fs::read_to_string(mps.join("model.mps")).unwrap()).unwrap();
    assert!(model.columns.iter().all(|c| !c.name.starts_with("n_units")));
}

#[test]
fn ablation_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let o = evplan(&["ablate", "--fleet", "5", "--battery", "20", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("variant,status,"));
    assert!(lines[1].starts_with("with,"));
    assert!(lines[2].starts_with("without,"));
    assert!(out.join("with/plan.csv").exists() && out.join("without/plan.csv").exists());
}

#[test]
fn sweep_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let o = evplan(&["sweep", "--fleet", "3,5", "--battery", "20", "--workers", "2", "--plan-only", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let capex = fs::read_to_string(out.join("capex.csv")).unwrap();
    assert!(capex.starts_with("fleet_size,battery_kwh,capex_eur,status\n3,20,"));
    assert_eq!(capex.lines().count(), 3);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(out.join("fleet5_battery20/plan.csv").exists());
    assert!(!out.join("fleet5_battery20/report.json").exists());
}
