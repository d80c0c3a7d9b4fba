//! Reading and writing networks, scenarios, solutions and batch tables.
//!
//! Network files are JSON with a mandatory `version`, a `base` of kV and MVA,
//! and an `impedance_unit` of `ohm` or `pu`. Loads and capacities are in kW,
//! kvar and kVA. Unknown fields are rejected. Loading converts impedances to
//! per unit on `Z = kV² / MVA` and voltage limits to squared per-unit values.

mod batch;

pub use batch::{read_batch_csv, write_batch_csv, BatchRow, RowStatus, BATCH_COLUMNS};

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BranchId, BranchRecord, GraphError, Network, NodeId, NodeKind, NodeRecord};
use crate::scenario::FaultScenario;

pub const NETWORK_SCHEMA: &str = include_str!("../../schemas/network.schema.json");
pub const SCENARIO_SCHEMA: &str = include_str!("../../schemas/scenario.schema.json");
pub const SOLUTION_SCHEMA: &str = include_str!("../../schemas/solution.schema.json");
pub const BATCH_SCHEMA: &str = include_str!("../../schemas/batch.schema.json");

/// The 33-node feeder shipped with the crate.
pub const IEEE33_JSON: &str = include_str!("../../data/ieee33.json");

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}:{line}:{column}: at `{field}`: {message}")]
    Schema { origin: String, field: String, line: usize, column: usize, message: String },
    #[error("{origin}: unsupported format version {found} (expected {FORMAT_VERSION})")]
    Version { origin: String, found: u32 },
    #[error("{origin}: invalid network")]
    Network { origin: String, source: GraphError },
    #[error("{origin}: malformed table")]
    Csv { origin: String, source: csv::Error },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpedanceUnit {
    Ohm,
    Pu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    pub kv: f64,
    pub mva: f64,
}

/// Voltage magnitude limits in per unit (not squared).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageSpec {
    pub min_pu: f64,
    pub max_pu: f64,
}

impl Default for VoltageSpec {
    fn default() -> Self {
        VoltageSpec { min_pu: 0.95, max_pu: 1.05 }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: u32,
    pub kind: NodeKind,
    #[serde(default)]
    pub p_kw: f64,
    #[serde(default)]
    pub q_kvar: f64,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub pcap_kw: f64,
    #[serde(default)]
    pub qcap_kvar: f64,
    /// Per-node override of the document's voltage limits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmin_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmax_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchEntry {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    /// Resistance and reactance in the document's impedance unit.
    pub r: f64,
    pub x: f64,
    pub scap_kva: f64,
    #[serde(default)]
    pub normally_open: bool,
    #[serde(default = "yes")]
    pub switchable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub base: BaseSpec,
    pub impedance_unit: ImpedanceUnit,
    #[serde(default)]
    pub voltage: VoltageSpec,
    pub nodes: Vec<NodeEntry>,
    pub branches: Vec<BranchEntry>,
}

impl NetworkDocument {
    /// Converts to a per-unit [`Network`]. Does not check connectivity.
    pub fn to_network(&self, origin: &str) -> Result<Network, DataError> {
        if self.version != FORMAT_VERSION {
            return Err(DataError::Version { origin: origin.into(), found: self.version });
        }
        if self.nodes.is_empty() {
            return Err(DataError::Schema {
                origin: origin.into(),
                field: "nodes".into(),
                line: 0,
                column: 0,
                message: "at least one node is required".into(),
            });
        }
        let z_base = match self.impedance_unit {
            ImpedanceUnit::Ohm => self.base.kv * self.base.kv / self.base.mva,
            ImpedanceUnit::Pu => 1.0,
        };
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let vmin = n.vmin_pu.unwrap_or(self.voltage.min_pu);
                let vmax = n.vmax_pu.unwrap_or(self.voltage.max_pu);
                NodeRecord {
                    id: NodeId(n.id),
                    kind: n.kind,
                    p_demand: n.p_kw,
                    q_demand: n.q_kvar,
                    p_cap: n.pcap_kw,
                    q_cap: n.qcap_kvar,
                    weight: n.weight,
                    v_min: vmin * vmin,
                    v_max: vmax * vmax,
                }
            })
            .collect();
        let branches = self
            .branches
            .iter()
            .map(|b| BranchRecord {
                id: BranchId(b.id),
                from: NodeId(b.from),
                to: NodeId(b.to),
                r: b.r / z_base,
                x: b.x / z_base,
                s_cap: b.scap_kva,
                switchable: b.switchable,
                normally_open: b.normally_open,
            })
            .collect();
        Network::new(self.base.kv, self.base.mva * 1000.0, nodes, branches)
            .map_err(|source| DataError::Network { origin: origin.into(), source })
    }

    /// Per-unit document for a network. The voltage header takes the first
    /// node's limits; nodes that differ carry their own.
    pub fn from_network(net: &Network, name: &str, description: &str) -> Self {
        let voltage = VoltageSpec {
            min_pu: net.node(0).v_min.sqrt(),
            max_pu: net.node(0).v_max.sqrt(),
        };
        let nodes = net
            .nodes()
            .iter()
            .map(|n| {
                let (vmin, vmax) = (n.v_min.sqrt(), n.v_max.sqrt());
                NodeEntry {
                    id: n.id.0,
                    kind: n.kind,
                    p_kw: n.p_demand,
                    q_kvar: n.q_demand,
                    weight: n.weight,
                    pcap_kw: n.p_cap,
                    qcap_kvar: n.q_cap,
                    vmin_pu: (n.v_min != net.node(0).v_min).then_some(vmin),
                    vmax_pu: (n.v_max != net.node(0).v_max).then_some(vmax),
                }
            })
            .collect();
        let branches = net
            .branches()
            .iter()
            .map(|b| BranchEntry {
                id: b.id.0,
                from: b.from.0,
                to: b.to.0,
                r: b.r,
                x: b.x,
                scap_kva: b.s_cap,
                normally_open: b.normally_open,
                switchable: b.switchable,
            })
            .collect();
        NetworkDocument {
            version: FORMAT_VERSION,
            name: name.into(),
            description: description.into(),
            base: BaseSpec { kv: net.base_kv(), mva: net.base_kva() / 1000.0 },
            impedance_unit: ImpedanceUnit::Pu,
            voltage,
            nodes,
            branches,
        }
    }
}

/// Strict JSON parsing with the failing field path and position in errors.
fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        DataError::Schema {
            origin: origin.into(),
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(|source| DataError::Io { path: path.into(), source })
}

/// Parses a network document and requires the network to be connected.
pub fn parse_network(text: &str, origin: &str) -> Result<Network, DataError> {
    let doc: NetworkDocument = parse_json(text, origin)?;
    let net = doc.to_network(origin)?;
    net.require_connected()
        .map_err(|source| DataError::Network { origin: origin.into(), source })?;
    Ok(net)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network, DataError> {
    let path = path.as_ref();
    parse_network(&read(path)?, &path.display().to_string())
}

pub fn save_network(path: impl AsRef<Path>, net: &Network, name: &str) -> Result<(), DataError> {
    let doc = NetworkDocument::from_network(net, name, "");
    write(path.as_ref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// The shipped 33-node feeder.
pub fn ieee33() -> Network {
    parse_network(IEEE33_JSON, "ieee33.json").expect("shipped network file is valid")
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<FaultScenario, DataError> {
    parse_json(text, origin)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<FaultScenario, DataError> {
    let path = path.as_ref();
    parse_scenario(&read(path)?, &path.display().to_string())
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), DataError> {
    write(path.as_ref(), &(serde_json::to_string_pretty(value)? + "\n"))
}
