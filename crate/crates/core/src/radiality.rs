//! Two-step radiality constraints.
//!
//! Step one forces a fictitious selection `β` to be a spanning tree of the
//! topology graph, using either the single-commodity flow (SCF) or the
//! directed multicommodity flow (DMCF) formulation. Step two couples the real
//! switch status `α <= β`, so `α` ranges over exactly the spanning forests of
//! the graph: every subgraph of a tree is a forest, and every forest of a
//! connected graph extends to a tree.
//!
//! With several substations, the topology graph merges them into one root so
//! that no closed path can join two of them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    is_spanning_forest, is_spanning_tree, BranchRecord, EdgeSelection, GraphError, Network,
    NodeId, NodeKind, NodeRecord, SelectionRole,
};
use crate::milp::{
    solve, ConstraintSense, MilpModel, ModelError, ObjectiveSense, SolveError, SolveOptions,
    SolveStatus, VarId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Single-commodity flow: compact, not tight.
    Scf,
    /// Directed multicommodity flow: its LP relaxation is the spanning tree
    /// polytope.
    Dmcf,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Scf => "scf",
            Formulation::Dmcf => "dmcf",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scf" => Ok(Formulation::Scf),
            "dmcf" => Ok(Formulation::Dmcf),
            other => Err(format!("unknown radiality formulation {other:?} (expected scf or dmcf)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RadialityError {
    #[error("network has neither a substation nor a DG to serve as root")]
    NoRoot,
    #[error("root node {0} is not in the topology graph")]
    UnknownRoot(NodeId),
    #[error("handles were built for a different model")]
    ForeignHandles,
    #[error("subgraph coupling was already added")]
    AlreadyCoupled,
    #[error("{0} binary variables are too many to enumerate")]
    TooManyBinaries(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Topology graph used for the radiality layer, with the maps back to the
/// operational network.
#[derive(Debug, Clone)]
pub struct MergedTopology {
    topology: Network,
    root: NodeId,
    node_map: Vec<usize>,
    branch_map: Vec<Option<usize>>,
}

impl MergedTopology {
    pub fn topology(&self) -> &Network {
        &self.topology
    }

    /// Id of the root node `i_r` in the topology graph.
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Topology node position of an original node position.
    pub fn topology_node(&self, original: usize) -> usize {
        self.node_map[original]
    }

    /// Topology branch position of an original branch position; `None` for a
    /// branch joining two substations, which the merge turns into a loop.
    pub fn topology_branch(&self, original: usize) -> Option<usize> {
        self.branch_map[original]
    }

    pub fn is_identity(&self) -> bool {
        self.node_map.iter().enumerate().all(|(i, &j)| i == j)
            && self.branch_map.iter().enumerate().all(|(k, &m)| m == Some(k))
    }
}

/// Collapses all substations into the lowest-id substation. Without any
/// substation the lowest-id DG becomes the root and nothing is merged.
pub fn merge_substations(net: &Network) -> Result<MergedTopology, RadialityError> {
    let substations: Vec<usize> = net.substations().collect();
    let identity = |root: usize| MergedTopology {
        topology: net.clone(),
        root: net.node(root).id,
        node_map: (0..net.node_count()).collect(),
        branch_map: (0..net.branch_count()).map(Some).collect(),
    };
    if substations.is_empty() {
        let root = net.dgs().min_by_key(|&i| net.node(i).id).ok_or(RadialityError::NoRoot)?;
        return Ok(identity(root));
    }
    if substations.len() == 1 {
        return Ok(identity(substations[0]));
    }
    let root_pos = *substations.iter().min_by_key(|&&i| net.node(i).id).unwrap();
    let root_id = net.node(root_pos).id;

    let mut nodes: Vec<NodeRecord> = Vec::new();
    let mut node_map = vec![usize::MAX; net.node_count()];
    let mut merged = net.node(root_pos).clone();
    for (i, node) in net.nodes().iter().enumerate() {
        if node.kind == NodeKind::Substation && i != root_pos {
            merged.p_demand += node.p_demand;
            merged.q_demand += node.q_demand;
            merged.p_cap += node.p_cap;
            merged.q_cap += node.q_cap;
        }
    }
    for (i, node) in net.nodes().iter().enumerate() {
        if node.kind == NodeKind::Substation {
            if i == root_pos {
                node_map[i] = nodes.len();
                nodes.push(merged.clone());
            }
        } else {
            node_map[i] = nodes.len();
            nodes.push(node.clone());
        }
    }
    let root_new = node_map[root_pos];
    for &s in &substations {
        node_map[s] = root_new;
    }

    let mut branches = Vec::new();
    let mut branch_map = Vec::with_capacity(net.branch_count());
    for (k, b) in net.branches().iter().enumerate() {
        let (u, v) = net.ends(k);
        let (nu, nv) = (node_map[u], node_map[v]);
        if nu == nv {
            branch_map.push(None);
            continue;
        }
        branch_map.push(Some(branches.len()));
        branches.push(BranchRecord {
            from: nodes[nu].id,
            to: nodes[nv].id,
            ..b.clone()
        });
    }
    let topology = Network::new(net.base_kv(), net.base_kva(), nodes, branches)?;
    Ok(MergedTopology { topology, root: root_id, node_map, branch_map })
}

/// Variables created by a radiality builder.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialityHandles {
    model_tag: u64,
    formulation: Formulation,
    root: NodeId,
    beta: Vec<VarId>,
    /// Arc variables `(from→to, to→from)` per branch; DMCF only.
    arcs: Vec<(VarId, VarId)>,
    alpha: Vec<VarId>,
}

impl RadialityHandles {
    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn beta(&self) -> &[VarId] {
        &self.beta
    }

    pub fn arcs(&self) -> &[(VarId, VarId)] {
        &self.arcs
    }

    /// Empty until [`add_subgraph_coupling`] runs.
    pub fn alpha(&self) -> &[VarId] {
        &self.alpha
    }
}

fn prepare(topology: &Network, root: NodeId) -> Result<usize, RadialityError> {
    topology.require_connected()?;
    topology.node_index(root).ok_or(RadialityError::UnknownRoot(root))
}

/// Flow conservation row for node `i`: `Σ inflow − Σ outflow = rhs`, where
/// `flows[k] = (from→to, to→from)`.
fn balance_terms(topology: &Network, flows: &[(VarId, VarId)], i: usize) -> Vec<(VarId, f64)> {
    topology
        .incident(i)
        .iter()
        .flat_map(|&k| {
            let (fw, bw) = flows[k];
            let (u, _) = topology.ends(k);
            if u == i {
                [(bw, 1.0), (fw, -1.0)]
            } else {
                [(fw, 1.0), (bw, -1.0)]
            }
        })
        .collect()
}

/// Single-commodity flow spanning tree constraints: the root ships one unit
/// to every other node over directed flows `0 <= F <= (|N|-1)·β`, and
/// exactly `|N|-1` branches are in the tree. Adds `3|L|` variables and
/// `|N| + 2|L|` constraints (the root balance is implied and omitted).
pub fn build_radiality_scf(
    model: &mut MilpModel,
    topology: &Network,
    root: NodeId,
) -> Result<RadialityHandles, RadialityError> {
    let root_pos = prepare(topology, root)?;
    let n = topology.node_count();
    let cap = (n - 1) as f64;
    let beta: Vec<VarId> = topology
        .branches()
        .iter()
        .map(|b| model.add_binary(format!("beta[{}]", b.id)))
        .collect();
    let flows: Vec<(VarId, VarId)> = topology
        .branches()
        .iter()
        .map(|b| {
            Ok((
                model.add_continuous(format!("F[{}]+", b.id), 0.0, cap)?,
                model.add_continuous(format!("F[{}]-", b.id), 0.0, cap)?,
            ))
        })
        .collect::<Result<_, ModelError>>()?;
    for i in (0..n).filter(|&i| i != root_pos) {
        model.add_constraint(
            format!("scf_balance[{}]", topology.node(i).id),
            balance_terms(topology, &flows, i),
            ConstraintSense::Eq,
            1.0,
        )?;
    }
    model.add_constraint(
        "scf_cardinality",
        beta.iter().map(|&b| (b, 1.0)),
        ConstraintSense::Eq,
        cap,
    )?;
    for (k, b) in topology.branches().iter().enumerate() {
        let (fw, bw) = flows[k];
        model.add_constraint(format!("scf_cap[{}]+", b.id), [(fw, 1.0), (beta[k], -cap)], ConstraintSense::Le, 0.0)?;
        model.add_constraint(format!("scf_cap[{}]-", b.id), [(bw, 1.0), (beta[k], -cap)], ConstraintSense::Le, 0.0)?;
    }
    Ok(RadialityHandles {
        model_tag: model.tag(),
        formulation: Formulation::Scf,
        root,
        beta,
        arcs: Vec::new(),
        alpha: Vec::new(),
    })
}

/// Directed multicommodity flow spanning tree constraints. One commodity per
/// non-root node `k`: the root emits one unit, `k` absorbs it, every other
/// node conserves it; commodity flow on an arc is bounded by the arc's
/// binary `λ`; exactly `|N|-1` arcs are chosen and `λ_ij + λ_ji = β_ij`.
/// Adds `2|N||L| + |L|` variables and `|N|² + 2|N||L| − |N| − |L| + 1`
/// constraints.
pub fn build_radiality_dmcf(
    model: &mut MilpModel,
    topology: &Network,
    root: NodeId,
) -> Result<RadialityHandles, RadialityError> {
    let root_pos = prepare(topology, root)?;
    let n = topology.node_count();
    let branches = topology.branches();
    let beta: Vec<VarId> = branches
        .iter()
        .map(|b| model.add_binary(format!("beta[{}]", b.id)))
        .collect();
    let arcs: Vec<(VarId, VarId)> = branches
        .iter()
        .map(|b| {
            (
                model.add_binary(format!("lambda[{}]+", b.id)),
                model.add_binary(format!("lambda[{}]-", b.id)),
            )
        })
        .collect();
    let commodities: Vec<usize> = (0..n).filter(|&i| i != root_pos).collect();
    let mut flows: Vec<Vec<(VarId, VarId)>> = Vec::with_capacity(commodities.len());
    for &c in &commodities {
        let cid = topology.node(c).id;
        let per_branch = branches
            .iter()
            .map(|b| {
                Ok((
                    model.add_continuous(format!("f[{cid}][{}]+", b.id), 0.0, f64::INFINITY)?,
                    model.add_continuous(format!("f[{cid}][{}]-", b.id), 0.0, f64::INFINITY)?,
                ))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        flows.push(per_branch);
    }

    for (flow, &c) in flows.iter().zip(&commodities) {
        let cid = topology.node(c).id;
        model.add_constraint(
            format!("dmcf_source[{cid}]"),
            balance_terms(topology, flow, root_pos),
            ConstraintSense::Eq,
            -1.0,
        )?;
        for i in (0..n).filter(|&i| i != root_pos && i != c) {
            model.add_constraint(
                format!("dmcf_transit[{cid}][{}]", topology.node(i).id),
                balance_terms(topology, flow, i),
                ConstraintSense::Eq,
                0.0,
            )?;
        }
        model.add_constraint(
            format!("dmcf_sink[{cid}]"),
            balance_terms(topology, flow, c),
            ConstraintSense::Eq,
            1.0,
        )?;
    }
    for (flow, &c) in flows.iter().zip(&commodities) {
        let cid = topology.node(c).id;
        for (k, b) in branches.iter().enumerate() {
            let ((fw, bw), (lf, lb)) = (flow[k], arcs[k]);
            model.add_constraint(format!("dmcf_arc[{cid}][{}]+", b.id), [(fw, 1.0), (lf, -1.0)], ConstraintSense::Le, 0.0)?;
            model.add_constraint(format!("dmcf_arc[{cid}][{}]-", b.id), [(bw, 1.0), (lb, -1.0)], ConstraintSense::Le, 0.0)?;
        }
    }
    model.add_constraint(
        "dmcf_cardinality",
        arcs.iter().flat_map(|&(f, b)| [(f, 1.0), (b, 1.0)]),
        ConstraintSense::Eq,
        (n - 1) as f64,
    )?;
    for (k, b) in branches.iter().enumerate() {
        let (lf, lb) = arcs[k];
        model.add_constraint(
            format!("dmcf_undirected[{}]", b.id),
            [(lf, 1.0), (lb, 1.0), (beta[k], -1.0)],
            ConstraintSense::Eq,
            0.0,
        )?;
    }
    Ok(RadialityHandles {
        model_tag: model.tag(),
        formulation: Formulation::Dmcf,
        root,
        beta,
        arcs,
        alpha: Vec::new(),
    })
}

pub fn build_radiality(
    model: &mut MilpModel,
    topology: &Network,
    root: NodeId,
    formulation: Formulation,
) -> Result<RadialityHandles, RadialityError> {
    match formulation {
        Formulation::Scf => build_radiality_scf(model, topology, root),
        Formulation::Dmcf => build_radiality_dmcf(model, topology, root),
    }
}

/// Creates one binary `α` per topology branch with `α <= β`.
pub fn add_subgraph_coupling(
    model: &mut MilpModel,
    handles: &mut RadialityHandles,
) -> Result<(), RadialityError> {
    if model.tag() != handles.model_tag {
        return Err(RadialityError::ForeignHandles);
    }
    if !handles.alpha.is_empty() {
        return Err(RadialityError::AlreadyCoupled);
    }
    let mut alpha = Vec::with_capacity(handles.beta.len());
    for (k, &beta) in handles.beta.iter().enumerate() {
        let name = model.var(beta).name.replacen("beta", "alpha", 1);
        let a = model.add_binary(name);
        model.add_constraint(format!("subgraph[{k}]"), [(a, 1.0), (beta, -1.0)], ConstraintSense::Le, 0.0)?;
        alpha.push(a);
    }
    handles.alpha = alpha;
    Ok(())
}

/// Largest number of binaries [`integer_feasible_set`] will enumerate.
pub const FEASIBLE_SET_LIMIT: usize = 16;

/// Every 0/1 assignment of `vars` that extends to a feasible point of the
/// model, found by fixing the variables and solving once per assignment.
/// Results are in bitmask order.
pub fn integer_feasible_set(
    model: &MilpModel,
    vars: &[VarId],
    opts: &SolveOptions,
) -> Result<Vec<Vec<bool>>, RadialityError> {
    if vars.len() > FEASIBLE_SET_LIMIT {
        return Err(RadialityError::TooManyBinaries(vars.len()));
    }
    let mut probe = model.clone();
    probe.set_objective(ObjectiveSense::Maximize, [])?;
    let mut feasible = Vec::new();
    for mask in 0u64..1 << vars.len() {
        let bits: Vec<bool> = (0..vars.len()).map(|k| mask >> k & 1 == 1).collect();
        for (&v, &b) in vars.iter().zip(&bits) {
            probe.fix(v, f64::from(u8::from(b)))?;
        }
        let outcome = solve(&probe, opts)?;
        match outcome.status {
            SolveStatus::Optimal => feasible.push(bits),
            SolveStatus::Infeasible => {}
            other => {
                return Err(RadialityError::Solve(SolveError::Backend(format!(
                    "feasibility probe ended with {other:?}"
                ))))
            }
        }
    }
    Ok(feasible)
}

/// Summary of LP-relaxation vertex checks under random objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpTrialReport {
    pub formulation: Formulation,
    /// True when the objective was on `α` with the coupling added; false for
    /// objectives on `β` alone.
    pub coupled: bool,
    pub trials: usize,
    /// Largest distance from {0, 1} of any checked coordinate over all trials.
    pub max_fractionality: f64,
    /// Trials whose rounded point was not a spanning tree (β) / forest (α).
    pub invalid_roundings: usize,
    pub non_optimal: usize,
}

impl LpTrialReport {
    pub fn integral(&self, tol: f64) -> bool {
        self.non_optimal == 0 && self.invalid_roundings == 0 && self.max_fractionality <= tol
    }
}

/// Solves the LP relaxation of the radiality constraints (with coupling when
/// `coupled`) under `trials` objectives drawn uniformly from `[-1, 1]` per
/// coordinate, and reports how far the optima are from integral.
pub fn lp_integrality_trials(
    topology: &Network,
    root: NodeId,
    formulation: Formulation,
    coupled: bool,
    trials: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<LpTrialReport, RadialityError> {
    let mut model = MilpModel::new(format!("lp_trials_{formulation}"));
    let mut handles = build_radiality(&mut model, topology, root, formulation)?;
    if coupled {
        add_subgraph_coupling(&mut model, &mut handles)?;
    }
    let mut relaxed = model.lp_relaxation();
    let checked: Vec<VarId> = if coupled { handles.alpha.clone() } else { handles.beta.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LpTrialReport {
        formulation,
        coupled,
        trials,
        max_fractionality: 0.0,
        invalid_roundings: 0,
        non_optimal: 0,
    };
    for _ in 0..trials {
        let objective: Vec<(VarId, f64)> =
            checked.iter().map(|&v| (v, rng.random_range(-1.0..=1.0))).collect();
        relaxed.set_objective(ObjectiveSense::Maximize, objective)?;
        let outcome = solve(&relaxed, opts)?;
        let Some(values) = outcome.values else {
            report.non_optimal += 1;
            continue;
        };
        let point: Vec<f64> = checked.iter().map(|v| values[v.index()]).collect();
        let frac = point.iter().map(|x| (x - x.round()).abs()).fold(0.0, f64::max);
        report.max_fractionality = report.max_fractionality.max(frac);
        let role = if coupled { SelectionRole::Actual } else { SelectionRole::Fictitious };
        let rounded = EdgeSelection::new(role, point.iter().map(|&x| x > 0.5).collect());
        let valid = if coupled {
            is_spanning_forest(topology, &rounded)?
        } else {
            is_spanning_tree(topology, &rounded)?
        };
        if !valid {
            report.invalid_roundings += 1;
        }
    }
    Ok(report)
}
