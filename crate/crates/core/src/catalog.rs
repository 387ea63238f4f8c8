//! Charger technologies, infrastructure plans and plan-level aggregates.
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BusId, GridNetwork};

pub const CATALOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedClass {
    Fast,
    Slow,
}

impl fmt::Display for SpeedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeedClass::Fast => "fast",
            SpeedClass::Slow => "slow",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargerType {
    pub id: String,
    pub speed: SpeedClass,
    /// Rated power of one port in kW; a unit delivers `power_per_port_kw * ports`.
    pub power_per_port_kw: f64,
    /// Port multiplier: simultaneous connections per installed unit.
    pub ports: u32,
    /// Installation cost per unit in euro.
    pub unit_cost: f64,
}

impl ChargerType {
    pub fn unit_power_kw(&self) -> f64 {
        self.power_per_port_kw * f64::from(self.ports)
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown charger type `{0}`")]
    UnknownType(String),
    #[error("invalid charger type `{id}`: {reason}")]
    InvalidType { id: String, reason: String },
    #[error("duplicate charger type `{0}`")]
    DuplicateType(String),
    #[error("catalog document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported catalog schema version {0}")]
    UnsupportedVersion(u32),
    #[error("plan file: {0}")]
    PlanFormat(String),
    #[error("plan places chargers at bus {0}, which is not a consumer bus")]
    NotConsumer(BusId),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for CatalogError {
    fn from(e: csv::Error) -> Self {
        CatalogError::PlanFormat(e.to_string())
    }
}

/// A set of charger technologies. The four defaults are not a closed set.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    types: Vec<ChargerType>,
}

pub const SLOW_SINGLE: &str = "slow_single";
pub const SLOW_MULTI: &str = "slow_multi";
pub const FAST_SINGLE: &str = "fast_single";
pub const FAST_MULTI: &str = "fast_multi";

/// The reference technology mix: slow/fast, single-port/four-port.
pub fn default_catalog() -> Catalog {
    let unit = |id: &str, speed, total_kw: f64, ports: u32, cost| ChargerType {
        id: id.to_string(),
        speed,
        power_per_port_kw: total_kw / f64::from(ports),
        ports,
        unit_cost: cost,
    };
    Catalog {
        types: vec![
            unit(SLOW_SINGLE, SpeedClass::Slow, 7.5, 1, 1500.0),
            unit(SLOW_MULTI, SpeedClass::Slow, 30.0, 4, 5000.0),
            unit(FAST_SINGLE, SpeedClass::Fast, 50.0, 1, 50_000.0),
            unit(FAST_MULTI, SpeedClass::Fast, 200.0, 4, 150_000.0),
        ],
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDocument {
    schema_version: u32,
    charger: Vec<ChargerRecord>,
}

/// One row of the catalog file; `power_kw` is the unit total, as in the
/// manufacturer's rating.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChargerRecord {
    id: String,
    speed: SpeedClass,
    power_kw: f64,
    ports: u32,
    cost_eur: f64,
}

impl Catalog {
    pub fn new(types: Vec<ChargerType>) -> Result<Self, CatalogError> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &types {
            if !seen.insert(t.id.clone()) {
                return Err(CatalogError::DuplicateType(t.id.clone()));
            }
            let reason = if !(t.power_per_port_kw > 0.0) {
                Some("rated power must be positive")
            } else if t.ports < 1 {
                Some("port multiplier must be at least 1")
            } else if !(t.unit_cost >= 0.0) {
                Some("unit cost must be nonnegative")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(CatalogError::InvalidType {
                    id: t.id.clone(),
                    reason: reason.to_string(),
                });
            }
        }
        Ok(Catalog { types })
    }

    pub fn types(&self) -> &[ChargerType] {
        &self.types
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&ChargerType, CatalogError> {
        self.types
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| CatalogError::UnknownType(id.to_string()))
    }

    /// Highest per-port rating within a speed class, or `None` if the class is absent.
    pub fn class_port_power(&self, speed: SpeedClass) -> Option<f64> {
        self.types
            .iter()
            .filter(|t| t.speed == speed)
            .map(|t| t.power_per_port_kw)
            .reduce(f64::max)
    }

    pub fn from_document(text: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDocument = toml::from_str(text)?;
        if doc.schema_version != CATALOG_SCHEMA_VERSION {
            return Err(CatalogError::UnsupportedVersion(doc.schema_version));
        }
        let types = doc
            .charger
            .into_iter()
            .map(|r| {
                if r.ports == 0 {
                    return Err(CatalogError::InvalidType {
                        id: r.id,
                        reason: "port multiplier must be at least 1".into(),
                    });
                }
                Ok(ChargerType {
                    power_per_port_kw: r.power_kw / f64::from(r.ports),
                    id: r.id,
                    speed: r.speed,
                    ports: r.ports,
                    unit_cost: r.cost_eur,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Catalog::new(types)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        Catalog::from_document(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> String {
        let doc = CatalogDocument {
            schema_version: CATALOG_SCHEMA_VERSION,
            charger: self
                .types
                .iter()
                .map(|t| ChargerRecord {
                    id: t.id.clone(),
                    speed: t.speed,
                    power_kw: t.unit_power_kw(),
                    ports: t.ports,
                    cost_eur: t.unit_cost,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("catalog serializes")
    }
}

/// Integer charger counts per (bus, charger type). Zero counts are not stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InfrastructurePlan {
    counts: BTreeMap<(BusId, String), u32>,
}

impl InfrastructurePlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, bus: BusId, charger: &str, count: u32) {
        let key = (bus, charger.to_string());
        if count == 0 {
            self.counts.remove(&key);
        } else {
            self.counts.insert(key, count);
        }
    }

    pub fn add(&mut self, bus: BusId, charger: &str, count: u32) {
        let current = self.count(bus, charger);
        self.set(bus, charger, current + count);
    }

    pub fn with(mut self, bus: BusId, charger: &str, count: u32) -> Self {
        self.add(bus, charger, count);
        self
    }

    pub fn count(&self, bus: BusId, charger: &str) -> u32 {
        self.counts
            .get(&(bus, charger.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(bus, type, count)` triples in ascending (bus, type) order.
    pub fn iter(&self) -> impl Iterator<Item = (BusId, &str, u32)> + '_ {
        self.counts
            .iter()
            .map(|((bus, ty), &count)| (*bus, ty.as_str(), count))
    }

    pub fn buses(&self) -> Vec<BusId> {
        let mut buses: Vec<BusId> = self.counts.keys().map(|(b, _)| *b).collect();
        buses.dedup();
        buses
    }

    pub fn type_totals(&self) -> BTreeMap<String, u32> {
        let mut totals = BTreeMap::new();
        for (_, ty, count) in self.iter() {
            *totals.entry(ty.to_string()).or_insert(0) += count;
        }
        totals
    }

    pub fn total_units(&self) -> u32 {
        self.counts.values().sum()
    }

    /// Pointwise sum of two plans.
    pub fn merged(&self, other: &InfrastructurePlan) -> InfrastructurePlan {
        let mut out = self.clone();
        for (bus, ty, count) in other.iter() {
            out.add(bus, ty, count);
        }
        out
    }

    /// Every count is at least the corresponding count in `other`.
    pub fn dominates(&self, other: &InfrastructurePlan) -> bool {
        other
            .iter()
            .all(|(bus, ty, count)| self.count(bus, ty) >= count)
    }

    /// Checks charger types exist and only consumer buses carry chargers.
    pub fn validate(&self, network: &GridNetwork, catalog: &Catalog) -> Result<(), CatalogError> {
        for (bus, ty, _) in self.iter() {
            catalog.get(ty)?;
            if !network.is_consumer(bus) {
                return Err(CatalogError::NotConsumer(bus));
            }
        }
        Ok(())
    }

    /// Writes `bus,type,count` rows with a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CatalogError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bus", "type", "count"])?;
        for (bus, ty, count) in self.iter() {
            w.write_record([bus.to_string(), ty.to_string(), count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CatalogError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["bus", "type", "count"] {
            return Err(CatalogError::PlanFormat(format!(
                "expected header `bus,type,count`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut plan = InfrastructurePlan::new();
        for record in r.records() {
            let record = record?;
            let bus: BusId = record[0]
                .parse()
                .map_err(|_| CatalogError::PlanFormat(format!("bad bus id `{}`", &record[0])))?;
            let count: u32 = record[2]
                .parse()
                .map_err(|_| CatalogError::PlanFormat(format!("bad count `{}`", &record[2])))?;
            plan.add(bus, &record[1], count);
        }
        Ok(plan)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("plan csv is utf-8")
    }
}

/// Total installation cost of a plan in euro.
pub fn capex(plan: &InfrastructurePlan, catalog: &Catalog) -> Result<f64, CatalogError> {
    plan.iter().try_fold(0.0, |acc, (_, ty, count)| {
        Ok(acc + catalog.get(ty)?.unit_cost * f64::from(count))
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodalCapacity {
    /// Aggregate EV power capacity in kW.
    pub power_kw: f64,
    /// Physical charging ports.
    pub ports: u32,
}

pub fn nodal_capacity(
    plan: &InfrastructurePlan,
    catalog: &Catalog,
    bus: BusId,
) -> Result<NodalCapacity, CatalogError> {
    let mut cap = NodalCapacity::default();
    for (b, ty, count) in plan.iter() {
        if b != bus {
            continue;
        }
        let t = catalog.get(ty)?;
        cap.power_kw += t.power_per_port_kw * f64::from(t.ports) * f64::from(count);
        cap.ports += t.ports * count;
    }
    Ok(cap)
}

/// Ports over the whole plan.
pub fn total_ports(plan: &InfrastructurePlan, catalog: &Catalog) -> Result<u32, CatalogError> {
    plan.iter()
        .try_fold(0, |acc, (_, ty, count)| Ok(acc + catalog.get(ty)?.ports * count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_types() {
        let cat = default_catalog();
        let sm = cat.get(SLOW_MULTI).unwrap();
        assert_eq!(sm.ports, 4);
        assert_eq!(sm.unit_power_kw(), 30.0);
        assert_eq!(sm.unit_cost, 5000.0);
        let fs = cat.get(FAST_SINGLE).unwrap();
        assert_eq!((fs.ports, fs.unit_power_kw(), fs.unit_cost), (1, 50.0, 50_000.0));
        assert_eq!(cat.get(FAST_MULTI).unwrap().power_per_port_kw, 50.0);
        assert_eq!(cat.get(SLOW_SINGLE).unwrap().power_per_port_kw, 7.5);
        assert_eq!(cat.class_port_power(SpeedClass::Fast), Some(50.0));
        assert_eq!(cat.class_port_power(SpeedClass::Slow), Some(7.5));
    }

    #[test]
    fn capex_of_reference_plans() {
        let cat = default_catalog();
        let plan = InfrastructurePlan::new()
            .with(2, SLOW_SINGLE, 24)
            .with(3, FAST_MULTI, 1)
            .with(4, SLOW_MULTI, 6);
        assert_eq!(capex(&plan, &cat).unwrap(), 216_000.0);
        let plan = InfrastructurePlan::new()
            .with(2, SLOW_SINGLE, 2)
            .with(5, SLOW_MULTI, 14);
        assert_eq!(capex(&plan, &cat).unwrap(), 73_000.0);
        assert_eq!(capex(&InfrastructurePlan::new(), &cat).unwrap(), 0.0);
    }

    #[test]
    fn unknown_type_is_an_error() {
        let plan = InfrastructurePlan::new().with(1, "wireless", 1);
        assert!(matches!(
            capex(&plan, &default_catalog()),
            Err(CatalogError::UnknownType(t)) if t == "wireless"
        ));
        assert!(nodal_capacity(&plan, &default_catalog(), 1).is_err());
    }

    #[test]
    fn nodal_capacity_of_one_multi_port() {
        let cat = default_catalog();
        let plan = InfrastructurePlan::new().with(3, SLOW_MULTI, 1);
        let cap = nodal_capacity(&plan, &cat, 3).unwrap();
        assert_eq!(cap.power_kw, 30.0);
        assert_eq!(cap.ports, 4);
        assert_eq!(nodal_capacity(&plan, &cat, 4).unwrap(), NodalCapacity::default());
    }

    #[test]
    fn ports_of_reference_row() {
        let cat = default_catalog();
        let plan = InfrastructurePlan::new()
            .with(2, SLOW_SINGLE, 24)
            .with(3, FAST_MULTI, 1)
            .with(4, SLOW_MULTI, 6);
        assert_eq!(total_ports(&plan, &cat).unwrap(), 52);
    }

    #[test]
    fn catalog_document_round_trip() {
        let cat = default_catalog();
        let back = Catalog::from_document(&cat.to_document()).unwrap();
        assert_eq!(back, cat);
    }

    #[test]
    fn invalid_catalog_entries() {
        let bad = ChargerType {
            id: "x".into(),
            speed: SpeedClass::Slow,
            power_per_port_kw: 0.0,
            ports: 1,
            unit_cost: 1.0,
        };
        assert!(Catalog::new(vec![bad.clone()]).is_err());
        let ok = ChargerType {
            power_per_port_kw: 3.0,
            ..bad
        };
        assert!(matches!(
            Catalog::new(vec![ok.clone(), ok]),
            Err(CatalogError::DuplicateType(_))
        ));
    }

    #[test]
    fn plan_csv_round_trip() {
        let plan = InfrastructurePlan::new()
            .with(2, SLOW_SINGLE, 3)
            .with(9, FAST_MULTI, 1);
        let text = plan.to_csv_string();
        assert_eq!(text, "bus,type,count\n2,slow_single,3\n9,fast_multi,1\n");
        assert_eq!(InfrastructurePlan::read_csv(text.as_bytes()).unwrap(), plan);
        assert!(InfrastructurePlan::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn arb_plan() -> impl Strategy<Value = InfrastructurePlan> {
        let types = [SLOW_SINGLE, SLOW_MULTI, FAST_SINGLE, FAST_MULTI];
        proptest::collection::vec((0usize..6, 0usize..4, 0u32..20), 0..12).prop_map(move |v| {
            let mut plan = InfrastructurePlan::new();
            for (bus, ty, count) in v {
                plan.add(bus, types[ty], count);
            }
            plan
        })
    }

    proptest! {
        #[test]
        fn aggregates_are_linear(a in arb_plan(), b in arb_plan()) {
            let cat = default_catalog();
            let sum = a.merged(&b);
            prop_assert_eq!(
                capex(&sum, &cat).unwrap(),
                capex(&a, &cat).unwrap() + capex(&b, &cat).unwrap()
            );
            for bus in 0..6 {
                let (ca, cb, cs) = (
                    nodal_capacity(&a, &cat, bus).unwrap(),
                    nodal_capacity(&b, &cat, bus).unwrap(),
                    nodal_capacity(&sum, &cat, bus).unwrap(),
                );
                prop_assert_eq!(cs.ports, ca.ports + cb.ports);
                prop_assert!((cs.power_kw - ca.power_kw - cb.power_kw).abs() < 1e-9);
            }
        }
    }
}
