#![allow(dead_code)]
//! Micro-instances shared by the integration tests.
use evplan::catalog::{Catalog, ChargerType, SpeedClass};
use evplan::grid::{Branch, Bus, BusId, GridNetwork};
use evplan::scenario::{BaseLoad, EvProfile, FleetScenario, TimeGrid, Window, Windows};

pub const SLOW: &str = "slow";
pub const SLOW_DUO: &str = "slow_duo";
pub const FAST: &str = "fast";

pub fn charger(id: &str, speed: SpeedClass, per_port: f64, ports: u32, cost: f64) -> ChargerType {
    ChargerType {
        id: id.into(),
        speed,
        power_per_port_kw: per_port,
        ports,
        unit_cost: cost,
    }
}

pub fn slow_only() -> Catalog {
    Catalog::new(vec![charger(SLOW, SpeedClass::Slow, 7.5, 1, 1500.0)]).unwrap()
}

pub fn two_slow() -> Catalog {
    Catalog::new(vec![
        charger(SLOW, SpeedClass::Slow, 7.5, 1, 1500.0),
        charger(SLOW_DUO, SpeedClass::Slow, 7.5, 2, 2600.0),
    ])
    .unwrap()
}

pub fn slow_and_fast() -> Catalog {
    Catalog::new(vec![
        charger(SLOW, SpeedClass::Slow, 7.5, 1, 1500.0),
        charger(FAST, SpeedClass::Fast, 50.0, 1, 50_000.0),
    ])
    .unwrap()
}

/// Slack bus 0 feeding consumer buses 1 and 2 in a chain.
pub fn feeder(rating_kva: f64, base_kva: f64, g: f64, b: f64) -> GridNetwork {
    let bus = |id, slack: bool| Bus {
        id,
        is_slack: slack,
        transformer_kva: if slack { 10_000.0 } else { rating_kva },
        is_consumer: !slack,
        label: None,
    };
    GridNetwork {
        buses: vec![bus(0, true), bus(1, false), bus(2, false)],
        branches: vec![
            Branch {
                from: 0,
                to: 1,
                conductance: g,
                susceptance: b,
            },
            Branch {
                from: 1,
                to: 2,
                conductance: g,
                susceptance: b,
            },
        ],
        v_min: 0.95,
        v_max: 1.05,
        theta_min: -0.5,
        theta_max: 0.5,
        base_kv: 20.0,
        base_kva,
    }
}

pub fn ev(id: usize, battery: f64, home: BusId, work: BusId, soc: f64) -> EvProfile {
    EvProfile {
        id,
        battery_kwh: battery,
        home_node: home,
        work_node: work,
        initial_soc: soc,
        target_soc: 1.0,
        efficiency: 0.85,
    }
}

pub fn windows(home: (f64, f64), work: (f64, f64)) -> Windows {
    Windows {
        home: Window::new(home.0, home.1),
        work: Window::new(work.0, work.1),
    }
}

pub fn grid(steps: usize, step_hours: f64) -> TimeGrid {
    TimeGrid {
        step_hours,
        horizon_steps: steps,
        start_hour: 0.0,
    }
}

pub fn base_load(peak_fraction: f64) -> BaseLoad {
    BaseLoad {
        peak_fraction,
        ..BaseLoad::default()
    }
}

pub struct Micro {
    pub label: String,
    pub network: GridNetwork,
    pub scenario: FleetScenario,
    pub catalog: Catalog,
}

/// A deterministic family of small instances: at most 3 buses, 4 EVs,
/// 6 steps and 2 charger types, with few parked EV-steps so that exhaustive
/// enumeration stays cheap.
pub fn corpus() -> Vec<Micro> {
    let mut out = Vec::new();
    let catalogs = [
        ("slow", slow_only as fn() -> Catalog),
        ("two_slow", two_slow),
        ("slow_fast", slow_and_fast),
    ];
    // (evs, steps, step_h, home window, work window, battery, rating, base, peak)
    let shapes: [(usize, usize, f64, (f64, f64), (f64, f64), f64, f64, f64, f64); 10] = [
        (1, 2, 1.0, (0.0, 1.0), (1.0, 2.0), 20.0, 1000.0, 1000.0, 0.0),
        (2, 3, 2.0, (0.0, 2.0), (4.0, 6.0), 20.0, 1000.0, 1000.0, 0.4),
        (2, 4, 1.0, (0.0, 1.0), (2.0, 3.0), 40.0, 20.0, 100.0, 0.4),
        (3, 6, 4.0, (0.0, 4.0), (12.0, 16.0), 40.0, 25.0, 100.0, 0.4),
        (3, 3, 2.0, (0.0, 2.0), (2.0, 4.0), 20.0, 15.0, 50.0, 0.3),
        (4, 2, 3.0, (0.0, 3.0), (12.0, 15.0), 20.0, 1000.0, 1000.0, 0.0),
        (2, 6, 1.0, (0.0, 1.0), (4.0, 5.0), 40.0, 12.0, 100.0, 0.5),
        (1, 4, 2.0, (0.0, 2.0), (4.0, 6.0), 40.0, 8.0, 20.0, 0.0),
        (1, 3, 3.0, (0.0, 3.0), (3.0, 6.0), 20.0, 60.0, 100.0, 0.5),
        (1, 5, 1.0, (1.0, 2.0), (3.0, 5.0), 20.0, 1000.0, 1000.0, 0.2),
    ];
    for (s, &(n, steps, dt, home, work, battery, rating, base, peak)) in shapes.iter().enumerate() {
        for (c, (cname, catalog)) in catalogs.iter().enumerate() {
            // Mixed-class catalogs double the binaries per slot; keep them to
            // the smaller shapes.
            if *cname == "slow_fast" && n > 1 {
                continue;
            }
            let evs = (0..n)
                .map(|i| {
                    let (h, w) = if (i + s) % 2 == 0 { (1, 2) } else { (2, 1) };
                    let soc = 0.1 + 0.1 * ((i + c + s) % 3) as f64;
                    ev(i, battery, h, w, soc)
                })
                .collect();
            let network = feeder(rating, base, 10.0 + s as f64, -20.0 - 2.0 * s as f64);
            let scenario = FleetScenario::new(
                evs,
                grid(steps, dt),
                windows(home, work),
                base_load(peak),
                &network,
                0,
            )
            .unwrap();
            out.push(Micro {
                label: format!("shape{s}/{cname}"),
                network,
                scenario,
                catalog: catalog(),
            });
        }
    }
    out
}
