//! Medium-voltage distribution network: buses, branch admittances and
//! operating limits, plus the versioned TOML network document.
//!
//! Branch `conductance`/`susceptance` are the series admittance terms
//! `G_nm`, `B_nm` used by the linearized flow rows:
//!
//! ```text
//! P_n = sum_m  G_nm (V_n - V_m) - B_nm (theta_n - theta_m)
//! Q_n = sum_m -B_nm (V_n - V_m) - G_nm (theta_n - theta_m)
//! ```
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Network document schema version understood by [`load_network`].
pub const NETWORK_SCHEMA_VERSION: u32 = 1;

const BUNDLED_CIGRE: &str = include_str!("../data/cigre_mv14.toml");

pub type BusId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub is_slack: bool,
    /// Local transformer rating in kVA.
    pub transformer_kva: f64,
    /// Eligible for chargers and base load.
    pub is_consumer: bool,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Series conductance, p.u.
    pub conductance: f64,
    /// Series susceptance, p.u. (negative for inductive lines).
    pub susceptance: f64,
}

impl Branch {
    fn connects(&self, a: BusId, b: BusId) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }
}

/// A distribution network. Treated as immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct GridNetwork {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub base_kv: f64,
    pub base_kva: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateBus(BusId),
    NonPositiveRating(BusId),
    SelfLoop(BusId),
    UnknownBranchBus { from: BusId, to: BusId },
    DuplicateBranch { from: BusId, to: BusId },
    MissingSlack,
    Disconnected,
    VMinNotBelowOne,
    VMaxNotAboveOne,
    ThetaMinNotNegative,
    ThetaMaxNotPositive,
    NonPositiveBase,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateBus(id) => write!(f, "duplicate bus id {id}"),
            Violation::NonPositiveRating(id) => {
                write!(f, "nonpositive transformer rating at bus {id}")
            }
            Violation::SelfLoop(id) => write!(f, "branch {id}-{id} connects a bus to itself"),
            Violation::UnknownBranchBus { from, to } => {
                write!(f, "branch {from}-{to} references an unknown bus")
            }
            Violation::DuplicateBranch { from, to } => {
                write!(f, "more than one branch between {from} and {to}")
            }
            Violation::MissingSlack => write!(f, "missing slack"),
            Violation::Disconnected => write!(f, "disconnected"),
            Violation::VMinNotBelowOne => write!(f, "v_min < 1.0 fails"),
            Violation::VMaxNotAboveOne => write!(f, "1.0 < v_max fails"),
            Violation::ThetaMinNotNegative => write!(f, "theta_min < 0 fails"),
            Violation::ThetaMaxNotPositive => write!(f, "0 < theta_max fails"),
            Violation::NonPositiveBase => write!(f, "nonpositive base voltage or power"),
        }
    }
}

/// Every invariant violation found in a network; empty iff the network is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, v: &Violation) -> bool {
        self.violations.contains(v)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported network schema version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid network: {0}")]
    Invalid(ValidationReport),
    #[error("unknown bus id {0}")]
    UnknownBus(BusId),
    #[error("reading network file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    schema_version: u32,
    header: HeaderRecord,
    #[serde(default)]
    bus: Vec<BusRecord>,
    #[serde(default)]
    branch: Vec<BranchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    base_kv: f64,
    base_kva: f64,
    v_min: f64,
    v_max: f64,
    theta_min: f64,
    theta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    slack: bool,
    transformer_kva: f64,
    consumer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchRecord {
    from: BusId,
    to: BusId,
    g_pu: f64,
    b_pu: f64,
}

/// Parses and validates a network document.
pub fn load_network(document: &str) -> Result<GridNetwork, NetworkError> {
    let doc: NetworkDocument = toml::from_str(document)?;
    if doc.schema_version != NETWORK_SCHEMA_VERSION {
        return Err(NetworkError::UnsupportedVersion(doc.schema_version));
    }
    let network = GridNetwork {
        buses: doc
            .bus
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                is_slack: b.slack,
                transformer_kva: b.transformer_kva,
                is_consumer: b.consumer,
                label: b.label,
            })
            .collect(),
        branches: doc
            .branch
            .into_iter()
            .map(|b| Branch {
                from: b.from,
                to: b.to,
                conductance: b.g_pu,
                susceptance: b.b_pu,
            })
            .collect(),
        v_min: doc.header.v_min,
        v_max: doc.header.v_max,
        theta_min: doc.header.theta_min,
        theta_max: doc.header.theta_max,
        base_kv: doc.header.base_kv,
        base_kva: doc.header.base_kva,
    };
    let report = validate_network(&network);
    if report.is_empty() {
        Ok(network)
    } else {
        Err(NetworkError::Invalid(report))
    }
}

pub fn load_network_file(path: impl AsRef<Path>) -> Result<GridNetwork, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    load_network(&text)
}

/// The shipped 14-bus CIGRE MV network.
pub fn bundled_cigre() -> GridNetwork {
    load_network(BUNDLED_CIGRE).expect("bundled CIGRE network is valid")
}

/// Raw text of the shipped CIGRE network document.
pub fn bundled_cigre_document() -> &'static str {
    BUNDLED_CIGRE
}

pub fn validate_network(network: &GridNetwork) -> ValidationReport {
    let mut violations = Vec::new();

    if network.base_kv <= 0.0 || network.base_kva <= 0.0 {
        violations.push(Violation::NonPositiveBase);
    }
    // NaN limits fail these comparisons too.
    if !(network.v_min < 1.0) {
        violations.push(Violation::VMinNotBelowOne);
    }
    if !(network.v_max > 1.0) {
        violations.push(Violation::VMaxNotAboveOne);
    }
    if !(network.theta_min < 0.0) {
        violations.push(Violation::ThetaMinNotNegative);
    }
    if !(network.theta_max > 0.0) {
        violations.push(Violation::ThetaMaxNotPositive);
    }

    let mut ids = BTreeSet::new();
    for bus in &network.buses {
        if !ids.insert(bus.id) {
            violations.push(Violation::DuplicateBus(bus.id));
        }
        if !(bus.transformer_kva > 0.0) {
            violations.push(Violation::NonPositiveRating(bus.id));
        }
    }
    if !network.buses.iter().any(|b| b.is_slack) {
        violations.push(Violation::MissingSlack);
    }

    let mut pairs = BTreeSet::new();
    for br in &network.branches {
        if br.from == br.to {
            violations.push(Violation::SelfLoop(br.from));
            continue;
        }
        if !ids.contains(&br.from) || !ids.contains(&br.to) {
            violations.push(Violation::UnknownBranchBus {
                from: br.from,
                to: br.to,
            });
            continue;
        }
        if !pairs.insert((br.from.min(br.to), br.from.max(br.to))) {
            violations.push(Violation::DuplicateBranch {
                from: br.from,
                to: br.to,
            });
        }
    }

    if !ids.is_empty() && !is_connected(&ids, &pairs) {
        violations.push(Violation::Disconnected);
    }

    ValidationReport { violations }
}

fn is_connected(ids: &BTreeSet<BusId>, pairs: &BTreeSet<(BusId, BusId)>) -> bool {
    let mut adjacency: HashMap<BusId, Vec<BusId>> = HashMap::new();
    for &(a, b) in pairs {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    let start = *ids.iter().next().expect("nonempty");
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(bus) = queue.pop_front() {
        for &next in adjacency.get(&bus).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen.len() == ids.len()
}

impl GridNetwork {
    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn contains(&self, id: BusId) -> bool {
        self.bus(id).is_some()
    }

    pub fn bus_ids(&self) -> Vec<BusId> {
        let mut ids: Vec<BusId> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn slack_buses(&self) -> Vec<BusId> {
        let mut ids: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.is_slack)
            .map(|b| b.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Non-slack buses eligible for chargers and base load, ascending by id.
    pub fn consumer_buses(&self) -> Vec<BusId> {
        let mut ids: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.is_consumer && !b.is_slack)
            .map(|b| b.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn is_consumer(&self, id: BusId) -> bool {
        self.bus(id).is_some_and(|b| b.is_consumer && !b.is_slack)
    }

    /// Branch admittance `(G, B)` between two buses; `(0, 0)` when not adjacent.
    pub fn nodal_admittance(&self, n: BusId, m: BusId) -> Result<(f64, f64), NetworkError> {
        for id in [n, m] {
            if !self.contains(id) {
                return Err(NetworkError::UnknownBus(id));
            }
        }
        Ok(self
            .branches
            .iter()
            .find(|br| br.from != br.to && br.connects(n, m))
            .map(|br| (br.conductance, br.susceptance))
            .unwrap_or((0.0, 0.0)))
    }

    /// Adjacent buses of `n` with the connecting branch admittance.
    pub fn neighbors(&self, n: BusId) -> Vec<(BusId, f64, f64)> {
        self.branches
            .iter()
            .filter_map(|br| {
                if br.from == n {
                    Some((br.to, br.conductance, br.susceptance))
                } else if br.to == n {
                    Some((br.from, br.conductance, br.susceptance))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Serializes to the versioned network document read by [`load_network`].
    pub fn to_document(&self) -> String {
        let doc = NetworkDocument {
            schema_version: NETWORK_SCHEMA_VERSION,
            header: HeaderRecord {
                base_kv: self.base_kv,
                base_kva: self.base_kva,
                v_min: self.v_min,
                v_max: self.v_max,
                theta_min: self.theta_min,
                theta_max: self.theta_max,
            },
            bus: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    label: b.label.clone(),
                    slack: b.is_slack,
                    transformer_kva: b.transformer_kva,
                    consumer: b.is_consumer,
                })
                .collect(),
            branch: self
                .branches
                .iter()
                .map(|b| BranchRecord {
                    from: b.from,
                    to: b.to,
                    g_pu: b.conductance,
                    b_pu: b.susceptance,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("network document serializes")
    }
}
