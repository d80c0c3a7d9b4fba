use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FormationError, FormationHandles, VariantKind};
use crate::graph::{
    connected_components, is_spanning_forest, BranchId, EdgeSelection, NodeId, NodeKind,
    SelectionRole,
};
use crate::milp::SolveOutcome;
use crate::radiality::Formulation;

/// Per-unit tolerance for balance residuals and voltage drop equalities.
const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerificationError {
    #[error("closed branches contain a cycle on the topology graph")]
    NotAForest,
    #[error("component containing node {node} holds {count} substations")]
    SharedSubstation { node: NodeId, count: usize },
    #[error("real power balance at node {node} is off by {residual:e} pu")]
    RealPowerBalance { node: NodeId, residual: f64 },
    #[error("reactive power balance at node {node} is off by {residual:e} pu")]
    ReactivePowerBalance { node: NodeId, residual: f64 },
    #[error("voltage drop on closed branch {branch} is off by {residual:e} pu")]
    VoltageDrop { branch: BranchId, residual: f64 },
    #[error("voltage at node {node} is outside its bounds")]
    VoltageBounds { node: NodeId },
    #[error("faulted branch {branch} is not in its stuck state")]
    FaultedBranch { branch: BranchId },
    #[error("load switch fault at node {node} is not respected")]
    LoadSwitch { node: NodeId },
    #[error("energization flag at node {node} disagrees with its closed neighbours")]
    Energization { node: NodeId },
    #[error("node {node} picks up load without a source in its component")]
    SourcelessPickup { node: NodeId },
    #[error("objective {reported} differs from recomputed restored weight {recomputed}")]
    Objective { reported: f64, recomputed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub kind: NodeKind,
    pub demand_kw: f64,
    pub weight: f64,
    /// Source real power capacity, kW (0 for non-sources).
    pub pcap_kw: f64,
    pub picked_up: bool,
    pub energized: bool,
    /// Squared voltage magnitude, per unit.
    pub v_sq: f64,
    pub pg_kw: f64,
    pub qg_kvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    pub id: BranchId,
    pub closed: bool,
    /// Flow from the `from` end toward the `to` end.
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// One connected component of the network under closed branches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub nodes: Vec<NodeId>,
    pub sources: Vec<NodeId>,
    pub energized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationSolution {
    pub variant: VariantKind,
    pub radiality: Formulation,
    pub scenario: String,
    /// Restored weighted load, kW.
    pub objective: f64,
    pub nodes: Vec<NodeState>,
    pub branches: Vec<BranchState>,
    pub components: Vec<ComponentReport>,
}

impl RestorationSolution {
    /// Number of trees in the spanning forest of closed branches.
    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// Components energized by at least one source.
    pub fn microgrid_count(&self) -> usize {
        self.components.iter().filter(|c| c.energized).count()
    }

    pub fn closed_branches(&self) -> impl Iterator<Item = BranchId> + '_ {
        self.branches.iter().filter(|b| b.closed).map(|b| b.id)
    }
}

/// Unweighted restored load, kW.
pub fn restored_load(sol: &RestorationSolution) -> f64 {
    sol.nodes.iter().filter(|n| n.picked_up).map(|n| n.demand_kw).sum()
}

/// DG real power output over DG capacity, substations excluded. `None` when
/// the network has no DG capacity.
pub fn dg_utilization(sol: &RestorationSolution) -> Option<f64> {
    let dgs = sol.nodes.iter().filter(|n| n.kind == NodeKind::Dg);
    let (out, cap) = dgs.fold((0.0, 0.0), |(o, c), n| (o + n.pg_kw, c + n.pcap_kw));
    (cap > 0.0).then(|| out / cap)
}

/// Reads an optimal outcome back into network terms and checks it: the
/// closed branches form a forest with at most one substation per component,
/// power balances and closed-branch voltage drops hold, faults are
/// respected, energization matches connectivity to a source, and sourceless
/// components serve no load.
///
/// A sourceless component may carry energization flags set to 1, which the
/// model permits at no cost; such flags are reported as 0.
pub fn extract_solution(
    outcome: &SolveOutcome,
    handles: &FormationHandles,
) -> Result<RestorationSolution, FormationError> {
    let values = match (&outcome.values, outcome.status) {
        (Some(v), _) => v,
        (None, status) => return Err(FormationError::NotOptimal(status)),
    };
    if values.len() != handles.num_vars {
        return Err(FormationError::ValueCount { expected: handles.num_vars, found: values.len() });
    }
    let net = &handles.network;
    let base = net.base_kva();
    let val = |v: crate::milp::VarId| values[v.index()];
    let on = |v: crate::milp::VarId| val(v) > 0.5;

    let closed: Vec<bool> = handles.alpha.iter().map(|&a| on(a)).collect();
    let picked: Vec<bool> = handles.delta.iter().map(|&d| on(d)).collect();
    let eps: Vec<bool> = match &handles.energized {
        Some(e) => e.iter().map(|&v| on(v)).collect(),
        None => vec![true; net.node_count()],
    };

    // topology
    let merged = &handles.merged;
    let topo = merged.topology();
    let mut topo_sel = EdgeSelection::empty(SelectionRole::Actual, topo.branch_count());
    for (k, &c) in closed.iter().enumerate() {
        match merged.topology_branch(k) {
            Some(t) => topo_sel.set(t, c),
            None if c => return Err(VerificationError::NotAForest.into()),
            None => {}
        }
    }
    if !is_spanning_forest(topo, &topo_sel)? {
        return Err(VerificationError::NotAForest.into());
    }
    let comps = connected_components(net, &EdgeSelection::actual(closed.clone()))?;
    let mut has_source = vec![false; comps.count()];
    for (c, group) in comps.groups().iter().enumerate() {
        let subs = group.iter().filter(|&&i| net.node(i).kind == NodeKind::Substation).count();
        if subs > 1 {
            return Err(VerificationError::SharedSubstation { node: net.node(group[0]).id, count: subs }.into());
        }
        has_source[c] = group.iter().any(|&i| net.node(i).kind.is_source());
    }

    // power flow
    for (i, n) in net.nodes().iter().enumerate() {
        let d = if picked[i] { 1.0 } else { 0.0 };
        for (flows, gen, demand, real) in [
            (&handles.p, handles.pg[i], n.p_demand, true),
            (&handles.q, handles.qg[i], n.q_demand, false),
        ] {
            let mut r = gen.map_or(0.0, val) - d * demand / base;
            for &k in net.incident(i) {
                let (from, _) = net.ends(k);
                r += if from == i { -val(flows[k]) } else { val(flows[k]) };
            }
            if r.abs() >= RESIDUAL_TOL {
                let e = if real {
                    VerificationError::RealPowerBalance { node: n.id, residual: r }
                } else {
                    VerificationError::ReactivePowerBalance { node: n.id, residual: r }
                };
                return Err(e.into());
            }
        }
        let v = val(handles.v[i]);
        if v < n.v_min - RESIDUAL_TOL || v > n.v_max + RESIDUAL_TOL {
            return Err(VerificationError::VoltageBounds { node: n.id }.into());
        }
    }
    for (k, b) in net.branches().iter().enumerate() {
        if !closed[k] {
            continue;
        }
        let (i, j) = net.ends(k);
        let r = val(handles.v[i]) - val(handles.v[j])
            - 2.0 * (b.r * val(handles.p[k]) + b.x * val(handles.q[k]));
        if r.abs() >= RESIDUAL_TOL {
            return Err(VerificationError::VoltageDrop { branch: b.id, residual: r }.into());
        }
    }

    // faults
    let scenario = &handles.scenario;
    for (ids, want) in [(&scenario.open_branches, false), (&scenario.closed_branches, true)] {
        for id in ids {
            if closed[net.branch_index(*id).expect("validated")] != want {
                return Err(VerificationError::FaultedBranch { branch: *id }.into());
            }
        }
    }
    for id in &scenario.open_load_switches {
        if picked[net.node_index(*id).expect("validated")] {
            return Err(VerificationError::LoadSwitch { node: *id }.into());
        }
    }
    for id in &scenario.closed_load_switches {
        let i = net.node_index(*id).expect("validated");
        if eps[i] && !picked[i] {
            return Err(VerificationError::LoadSwitch { node: *id }.into());
        }
    }

    // energization
    for (i, n) in net.nodes().iter().enumerate() {
        if eps[i] && !n.kind.is_source() {
            let linked = net.incident(i).iter().any(|&k| closed[k] && eps[net.opposite(k, i)]);
            if !linked {
                return Err(VerificationError::Energization { node: n.id }.into());
            }
        }
        let fed = has_source[comps.component_of(i)];
        if fed && !eps[i] {
            return Err(VerificationError::Energization { node: n.id }.into());
        }
        if !fed && picked[i] && n.p_demand + n.q_demand.abs() > 0.0 {
            return Err(VerificationError::SourcelessPickup { node: n.id }.into());
        }
    }

    let nodes: Vec<NodeState> = net
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let has_demand = n.p_demand > 0.0 || n.q_demand != 0.0;
            NodeState {
                id: n.id,
                kind: n.kind,
                demand_kw: n.p_demand,
                weight: n.weight,
                pcap_kw: if n.kind.is_source() { n.p_cap } else { 0.0 },
                picked_up: picked[i] && has_demand,
                energized: has_source[comps.component_of(i)],
                v_sq: val(handles.v[i]),
                pg_kw: handles.pg[i].map_or(0.0, |g| val(g) * base),
                qg_kvar: handles.qg[i].map_or(0.0, |g| val(g) * base),
            }
        })
        .collect();
    let recomputed: f64 = nodes.iter().filter(|n| n.picked_up).map(|n| n.weight * n.demand_kw).sum();
    let reported = outcome.objective.unwrap_or(f64::NAN);
    if (reported - recomputed).abs() > RESIDUAL_TOL * recomputed.abs().max(1.0) {
        return Err(VerificationError::Objective { reported, recomputed }.into());
    }
    let branches = net
        .branches()
        .iter()
        .enumerate()
        .map(|(k, b)| BranchState {
            id: b.id,
            closed: closed[k],
            p_kw: val(handles.p[k]) * base,
            q_kvar: val(handles.q[k]) * base,
        })
        .collect();
    let components = comps
        .groups()
        .iter()
        .enumerate()
        .map(|(c, group)| ComponentReport {
            nodes: group.iter().map(|&i| net.node(i).id).collect(),
            sources: group.iter().filter(|&&i| net.node(i).kind.is_source()).map(|&i| net.node(i).id).collect(),
            energized: has_source[c],
        })
        .collect();
    Ok(RestorationSolution {
        variant: handles.variant.kind,
        radiality: handles.variant.radiality,
        scenario: scenario.label.clone(),
        objective: recomputed,
        nodes,
        branches,
        components,
    })
}
