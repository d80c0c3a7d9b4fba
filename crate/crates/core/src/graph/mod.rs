//! Distribution network graph and the combinatorial checks used as ground
//! truth for every radiality claim in the crate.
//!
//! A [`Network`] is an undirected multigraph: parallel branches between the
//! same pair of nodes are allowed, self-loops are not. Nodes and branches are
//! addressed two ways: by their user-facing ids ([`NodeId`], [`BranchId`]) and
//! by their dense position in the network's storage. Selections, models and
//! solutions always use positions.

mod enumerate;

pub use enumerate::{
    count_spanning_trees, enumerate_spanning_forests, enumerate_spanning_trees,
    extend_to_spanning_tree, FOREST_ENUMERATION_LIMIT, TREE_ENUMERATION_LIMIT,
};

use std::collections::HashMap;
use std::fmt;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Substation,
    Dg,
    Load,
    Junction,
}

impl NodeKind {
    /// Substations and DGs are power sources; every other kind has zero
    /// generation capacity.
    pub fn is_source(self) -> bool {
        matches!(self, NodeKind::Substation | NodeKind::Dg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Real power demand, kW.
    pub p_demand: f64,
    /// Reactive power demand, kvar.
    pub q_demand: f64,
    /// Real power source capacity, kW.
    pub p_cap: f64,
    /// Reactive power source capacity, kvar.
    pub q_cap: f64,
    /// Load priority weight.
    pub weight: f64,
    /// Squared voltage magnitude bounds, per unit.
    pub v_min: f64,
    pub v_max: f64,
}

impl NodeRecord {
    /// A node with no demand, no capacity, unit weight and the default
    /// voltage box (0.95..1.05 pu, squared).
    pub fn new(id: NodeId, kind: NodeKind) -> Self {
        NodeRecord {
            id,
            kind,
            p_demand: 0.0,
            q_demand: 0.0,
            p_cap: 0.0,
            q_cap: 0.0,
            weight: 1.0,
            v_min: 0.95 * 0.95,
            v_max: 1.05 * 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub id: BranchId,
    pub from: NodeId,
    pub to: NodeId,
    /// Resistance and reactance, per unit.
    pub r: f64,
    pub x: f64,
    /// Apparent power capacity, kVA.
    pub s_cap: f64,
    pub switchable: bool,
    pub normally_open: bool,
}

impl BranchRecord {
    pub fn new(id: BranchId, from: NodeId, to: NodeId) -> Self {
        BranchRecord {
            id,
            from,
            to,
            r: 0.01,
            x: 0.01,
            s_cap: 1000.0,
            switchable: true,
            normally_open: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("network has no nodes")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate branch id {0}")]
    DuplicateBranch(BranchId),
    #[error("branch {branch} references unknown node {node}")]
    UnknownEndpoint { branch: BranchId, node: NodeId },
    #[error("branch {0} connects a node to itself")]
    SelfLoop(BranchId),
    #[error("node {0} is not a source but has non-zero generation capacity")]
    CapacityWithoutSource(NodeId),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("network is not connected")]
    Disconnected,
    #[error("selection has {found} entries but the network needs {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation needs an undirected selection, got {0:?}")]
    WrongRole(SelectionRole),
    #[error("{branches} branches exceed the enumeration limit of {limit}")]
    TooLarge { branches: usize, limit: usize },
    #[error("selection contains a cycle")]
    NotAForest,
    #[error("spanning tree count does not fit in 128 bits")]
    CountOverflow,
}

/// Undirected multigraph of a distribution system.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    base_kv: f64,
    base_kva: f64,
    nodes: Vec<NodeRecord>,
    branches: Vec<BranchRecord>,
    node_pos: HashMap<NodeId, usize>,
    branch_pos: HashMap<BranchId, usize>,
    ends: Vec<(usize, usize)>,
    incident: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network and checks its structural invariants: unique ids,
    /// existing endpoints, no self-loops, generation capacity only on source
    /// nodes, sane numeric values. Connectivity is not required here; use
    /// [`Network::is_connected`] or [`Network::require_connected`].
    pub fn new(
        base_kv: f64,
        base_kva: f64,
        nodes: Vec<NodeRecord>,
        branches: Vec<BranchRecord>,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        if !(base_kv > 0.0 && base_kva > 0.0) {
            return Err(GraphError::InvalidValue(format!(
                "base voltage and power must be positive (got {base_kv} kV, {base_kva} kVA)"
            )));
        }
        let mut node_pos = HashMap::with_capacity(nodes.len());
        for (pos, node) in nodes.iter().enumerate() {
            if node_pos.insert(node.id, pos).is_some() {
                return Err(GraphError::DuplicateNode(node.id));
            }
            validate_node(node)?;
        }
        let mut branch_pos = HashMap::with_capacity(branches.len());
        let mut ends = Vec::with_capacity(branches.len());
        let mut incident = vec![Vec::new(); nodes.len()];
        for (pos, branch) in branches.iter().enumerate() {
            if branch_pos.insert(branch.id, pos).is_some() {
                return Err(GraphError::DuplicateBranch(branch.id));
            }
            let lookup = |node: NodeId| {
                node_pos.get(&node).copied().ok_or(GraphError::UnknownEndpoint {
                    branch: branch.id,
                    node,
                })
            };
            let (u, v) = (lookup(branch.from)?, lookup(branch.to)?);
            if u == v {
                return Err(GraphError::SelfLoop(branch.id));
            }
            validate_branch(branch)?;
            ends.push((u, v));
            incident[u].push(pos);
            incident[v].push(pos);
        }
        Ok(Network {
            base_kv,
            base_kva,
            nodes,
            branches,
            node_pos,
            branch_pos,
            ends,
            incident,
        })
    }

    /// Plain graph with nodes `1..=node_count` and the given edge list; node 1
    /// is a substation, the rest are junctions. Branch ids follow list order
    /// starting at 1.
    pub fn from_edge_list(node_count: u32, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let nodes = (1..=node_count)
            .map(|i| {
                let kind = if i == 1 { NodeKind::Substation } else { NodeKind::Junction };
                NodeRecord::new(NodeId(i), kind)
            })
            .collect();
        let branches = edges
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| BranchRecord::new(BranchId(k as u32 + 1), NodeId(a), NodeId(b)))
            .collect();
        Network::new(12.66, 1000.0, nodes, branches)
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn base_kva(&self) -> f64 {
        self.base_kva
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn branches(&self) -> &[BranchRecord] {
        &self.branches
    }

    pub fn node(&self, pos: usize) -> &NodeRecord {
        &self.nodes[pos]
    }

    pub fn branch(&self, pos: usize) -> &BranchRecord {
        &self.branches[pos]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.node_pos.get(&id).copied()
    }

    pub fn branch_index(&self, id: BranchId) -> Option<usize> {
        self.branch_pos.get(&id).copied()
    }

    /// Endpoint positions `(from, to)` of a branch.
    pub fn ends(&self, branch: usize) -> (usize, usize) {
        self.ends[branch]
    }

    /// Branch positions incident to a node.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    /// Number of branches starting or ending at the node.
    pub fn degree(&self, node: usize) -> usize {
        self.incident[node].len()
    }

    /// The endpoint of `branch` that is not `node`.
    pub fn opposite(&self, branch: usize, node: usize) -> usize {
        let (u, v) = self.ends[branch];
        if u == node {
            v
        } else {
            u
        }
    }

    pub fn substations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Substation)
    }

    pub fn dgs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Dg)
    }

    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind.is_source())
    }

    /// Total real power demand in kW.
    pub fn total_demand_kw(&self) -> f64 {
        self.nodes.iter().map(|n| n.p_demand).sum()
    }

    pub fn is_connected(&self) -> bool {
        let all = EdgeSelection::new(SelectionRole::Actual, vec![true; self.branch_count()]);
        connected_components(self, &all)
            .map(|c| c.count() == 1)
            .unwrap_or(false)
    }

    pub fn require_connected(&self) -> Result<(), GraphError> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(GraphError::Disconnected)
        }
    }
}

fn validate_node(node: &NodeRecord) -> Result<(), GraphError> {
    let finite = [
        node.p_demand,
        node.q_demand,
        node.p_cap,
        node.q_cap,
        node.weight,
        node.v_min,
        node.v_max,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite {
        return Err(GraphError::InvalidValue(format!("node {} has a non-finite field", node.id)));
    }
    if !node.kind.is_source() && (node.p_cap != 0.0 || node.q_cap != 0.0) {
        return Err(GraphError::CapacityWithoutSource(node.id));
    }
    if node.p_cap < 0.0 || node.q_cap < 0.0 || node.p_demand < 0.0 || node.weight < 0.0 {
        return Err(GraphError::InvalidValue(format!(
            "node {} has a negative demand, capacity or weight",
            node.id
        )));
    }
    if !(node.v_min > 0.0 && node.v_min <= node.v_max) {
        return Err(GraphError::InvalidValue(format!(
            "node {} voltage box [{}, {}] is empty or non-positive",
            node.id, node.v_min, node.v_max
        )));
    }
    Ok(())
}

fn validate_branch(branch: &BranchRecord) -> Result<(), GraphError> {
    if !(branch.r.is_finite() && branch.x.is_finite() && branch.r >= 0.0) {
        return Err(GraphError::InvalidValue(format!("branch {} impedance", branch.id)));
    }
    if !(branch.s_cap.is_finite() && branch.s_cap > 0.0) {
        return Err(GraphError::InvalidValue(format!(
            "branch {} capacity must be positive",
            branch.id
        )));
    }
    Ok(())
}

/// What a 0/1 branch vector stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRole {
    /// Real connection status of each branch.
    Actual,
    /// Connection status in the auxiliary spanning tree.
    Fictitious,
    /// One entry per arc direction: `2k` is from→to, `2k+1` is to→from.
    DirectedArc,
}

/// A 0/1 vector over branches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeSelection {
    role: SelectionRole,
    bits: Vec<bool>,
}

impl EdgeSelection {
    pub fn new(role: SelectionRole, bits: Vec<bool>) -> Self {
        EdgeSelection { role, bits }
    }

    pub fn actual(bits: Vec<bool>) -> Self {
        Self::new(SelectionRole::Actual, bits)
    }

    pub fn fictitious(bits: Vec<bool>) -> Self {
        Self::new(SelectionRole::Fictitious, bits)
    }

    /// Builds a selection from a 0/1 slice; any non-zero entry counts as selected.
    pub fn from_indicator(role: SelectionRole, indicator: &[u8]) -> Self {
        Self::new(role, indicator.iter().map(|&b| b != 0).collect())
    }

    pub fn empty(role: SelectionRole, len: usize) -> Self {
        Self::new(role, vec![false; len])
    }

    /// Bit `k` of `mask` selects entry `k`.
    pub fn from_mask(role: SelectionRole, len: usize, mask: u64) -> Self {
        Self::new(role, (0..len).map(|k| mask >> k & 1 == 1).collect())
    }

    pub fn role(&self) -> SelectionRole {
        self.role
    }

    pub fn with_role(mut self, role: SelectionRole) -> Self {
        self.role = role;
        self
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn set(&mut self, k: usize, value: bool) {
        self.bits[k] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k)
    }

    /// Componentwise `self <= other`.
    pub fn is_subset_of(&self, other: &EdgeSelection) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn to_indicator(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| u8::from(b)).collect()
    }
}

impl fmt::Display for EdgeSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, b) in self.bits.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", u8::from(*b))?;
        }
        write!(f, "]")
    }
}

fn check_undirected(net: &Network, sel: &EdgeSelection) -> Result<(), GraphError> {
    if sel.role() == SelectionRole::DirectedArc {
        return Err(GraphError::WrongRole(sel.role()));
    }
    if sel.len() != net.branch_count() {
        return Err(GraphError::DimensionMismatch {
            expected: net.branch_count(),
            found: sel.len(),
        });
    }
    Ok(())
}

/// True iff the selected branches contain no cycle. Two selected parallel
/// branches form a cycle.
pub fn is_spanning_forest(net: &Network, sel: &EdgeSelection) -> Result<bool, GraphError> {
    check_undirected(net, sel)?;
    let mut uf = UnionFind::<usize>::new(net.node_count());
    for k in sel.selected() {
        let (u, v) = net.ends(k);
        if !uf.union(u, v) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff the selected branches are acyclic and connect every node.
pub fn is_spanning_tree(net: &Network, sel: &EdgeSelection) -> Result<bool, GraphError> {
    check_undirected(net, sel)?;
    if sel.count() + 1 != net.node_count() {
        return Ok(false);
    }
    is_spanning_forest(net, sel)
}

/// Node partition induced by a selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    groups: Vec<Vec<usize>>,
    label: Vec<usize>,
}

impl Components {
    /// Number of components (the κ of a κ-tree).
    pub fn count(&self) -> usize {
        self.groups.len()
    }

    /// Node positions per component, ordered by smallest node id, members
    /// sorted by id.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Component index of a node position.
    pub fn component_of(&self, node: usize) -> usize {
        self.label[node]
    }
}

pub fn connected_components(net: &Network, sel: &EdgeSelection) -> Result<Components, GraphError> {
    check_undirected(net, sel)?;
    let mut uf = UnionFind::<usize>::new(net.node_count());
    for k in sel.selected() {
        let (u, v) = net.ends(k);
        uf.union(u, v);
    }
    let mut order: Vec<usize> = (0..net.node_count()).collect();
    order.sort_by_key(|&i| net.node(i).id);
    let mut root_to_group: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut label = vec![0; net.node_count()];
    for i in order {
        let root = uf.find(i);
        let g = *root_to_group.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
        label[i] = g;
    }
    Ok(Components { groups, label })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Network {
        Network::from_edge_list(3, &[(1, 2), (1, 3), (2, 3)]).unwrap()
    }

    fn sel(bits: &[u8]) -> EdgeSelection {
        EdgeSelection::from_indicator(SelectionRole::Actual, bits)
    }

    #[test]
    fn tree_checks_on_triangle() {
        let net = triangle();
        assert!(is_spanning_tree(&net, &sel(&[1, 1, 0])).unwrap());
        assert!(is_spanning_tree(&net, &sel(&[0, 1, 1])).unwrap());
        assert!(!is_spanning_tree(&net, &sel(&[1, 1, 1])).unwrap());
        assert!(!is_spanning_tree(&net, &sel(&[1, 0, 0])).unwrap());
    }

    #[test]
    fn path_is_its_own_tree() {
        let net = Network::from_edge_list(3, &[(1, 2), (2, 3)]).unwrap();
        assert!(is_spanning_tree(&net, &sel(&[1, 1])).unwrap());
    }

    #[test]
    fn forest_checks_on_triangle() {
        let net = triangle();
        assert!(is_spanning_forest(&net, &sel(&[0, 0, 0])).unwrap());
        assert!(is_spanning_forest(&net, &sel(&[1, 0, 1])).unwrap());
        assert!(!is_spanning_forest(&net, &sel(&[1, 1, 1])).unwrap());
    }

    #[test]
    fn doubled_branch_is_a_cycle() {
        let net = Network::from_edge_list(2, &[(1, 2), (2, 1)]).unwrap();
        assert!(is_spanning_forest(&net, &sel(&[1, 0])).unwrap());
        assert!(!is_spanning_forest(&net, &sel(&[1, 1])).unwrap());
    }

    #[test]
    fn component_counts() {
        let net = Network::from_edge_list(6, &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]).unwrap();
        let full = connected_components(&net, &sel(&[1, 1, 1, 1, 1])).unwrap();
        assert_eq!(full.count(), 1);
        let empty = connected_components(&net, &sel(&[0, 0, 0, 0, 0])).unwrap();
        assert_eq!(empty.count(), 6);
        // 3-tree: {1,2}, {3,4,5}, {6}
        let three = connected_components(&net, &sel(&[1, 0, 1, 1, 0])).unwrap();
        assert_eq!(three.count(), 3);
        assert_eq!(three.groups(), &[vec![0, 1], vec![2, 3, 4], vec![5]]);
        assert_eq!(three.component_of(4), 1);
    }

    #[test]
    fn components_ordered_by_smallest_id() {
        let nodes = vec![
            NodeRecord::new(NodeId(9), NodeKind::Substation),
            NodeRecord::new(NodeId(2), NodeKind::Load),
            NodeRecord::new(NodeId(5), NodeKind::Load),
        ];
        let branches = vec![BranchRecord::new(BranchId(1), NodeId(9), NodeId(5))];
        let net = Network::new(12.66, 1000.0, nodes, branches).unwrap();
        let comps = connected_components(&net, &sel(&[1])).unwrap();
        assert_eq!(comps.groups(), &[vec![1], vec![2, 0]]);
    }

    #[test]
    fn dimension_and_role_errors() {
        let net = triangle();
        assert_eq!(
            is_spanning_tree(&net, &sel(&[1, 1])),
            Err(GraphError::DimensionMismatch { expected: 3, found: 2 })
        );
        let arcs = EdgeSelection::empty(SelectionRole::DirectedArc, 3);
        assert!(matches!(is_spanning_forest(&net, &arcs), Err(GraphError::WrongRole(_))));
    }

    #[test]
    fn structural_invariants() {
        assert!(matches!(
            Network::from_edge_list(2, &[(1, 1)]),
            Err(GraphError::SelfLoop(_))
        ));
        assert!(matches!(
            Network::from_edge_list(2, &[(1, 3)]),
            Err(GraphError::UnknownEndpoint { .. })
        ));
        let mut load = NodeRecord::new(NodeId(1), NodeKind::Load);
        load.p_cap = 10.0;
        assert_eq!(
            Network::new(12.66, 1000.0, vec![load], vec![]),
            Err(GraphError::CapacityWithoutSource(NodeId(1)))
        );
        let dup = vec![
            NodeRecord::new(NodeId(1), NodeKind::Load),
            NodeRecord::new(NodeId(1), NodeKind::Load),
        ];
        assert_eq!(
            Network::new(12.66, 1000.0, dup, vec![]),
            Err(GraphError::DuplicateNode(NodeId(1)))
        );
    }

    #[test]
    fn degree_matches_adjacency() {
        let net = Network::from_edge_list(4, &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)]).unwrap();
        let degrees: Vec<usize> = (0..4).map(|i| net.degree(i)).collect();
        assert_eq!(degrees, vec![3, 2, 3, 2]);
        assert!(net.is_connected());
        let split = Network::from_edge_list(4, &[(1, 2), (3, 4)]).unwrap();
        assert_eq!(split.require_connected(), Err(GraphError::Disconnected));
    }
}
