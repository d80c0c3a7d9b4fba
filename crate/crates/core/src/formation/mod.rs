//! Microgrid formation after faults: choose switch states, load pickups and
//! source dispatch so that as much weighted load as possible is restored by
//! radial islands, each energized by its own sources.
//!
//! Power flow is the linearized DistFlow model in per unit on the network's
//! base, with squared voltage magnitudes. Two baseline variants restrict the
//! search space: `fixed_islands` requires exactly one source per island and
//! every node energized, and `radial_baseline` additionally keeps every
//! normally-open tie open.

mod solution;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{is_spanning_tree, EdgeSelection, GraphError, Network, SelectionRole};
use crate::milp::{
    mccormick_binary_product, polygonal_capacity_cuts, solve, ConstraintSense, MilpModel,
    ModelError, ObjectiveSense, SolveError, SolveOptions, SolveOutcome, SolveStatus, VarId,
    DEFAULT_POLYGON_SEGMENTS,
};
use crate::radiality::{
    add_subgraph_coupling, build_radiality, merge_substations, Formulation, MergedTopology,
    RadialityError, RadialityHandles,
};
use crate::scenario::{FaultScenario, ScenarioError};

pub use solution::{
    dg_utilization, extract_solution, restored_load, BranchState, ComponentReport, NodeState,
    RestorationSolution, VerificationError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Proposed,
    FixedIslands,
    RadialBaseline,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] =
        [VariantKind::Proposed, VariantKind::FixedIslands, VariantKind::RadialBaseline];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Proposed => "proposed",
            VariantKind::FixedIslands => "fixed_islands",
            VariantKind::RadialBaseline => "radial_baseline",
        }
    }

    /// Whether the variant builds its radiality layer with the chosen
    /// formulation. The baselines always use their own single-commodity
    /// flow per source.
    pub fn uses_radiality_formulation(self) -> bool {
        self == VariantKind::Proposed
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?} (expected proposed, fixed_islands or radial_baseline)"))
    }
}

/// How the big-M constant of the voltage drop constraints is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigMPolicy {
    /// `(max v̄ − min v̲) + 2(r + x)·S̄` per branch, in per unit: the smallest
    /// value that leaves an open branch's voltages free within their boxes.
    PerBranch,
    /// One constant for every branch.
    Uniform(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelVariant {
    pub kind: VariantKind,
    pub radiality: Formulation,
    pub segments: u32,
    pub big_m: BigMPolicy,
}

impl ModelVariant {
    pub fn new(kind: VariantKind, radiality: Formulation) -> Self {
        let radiality = if kind.uses_radiality_formulation() { radiality } else { Formulation::Scf };
        ModelVariant { kind, radiality, segments: DEFAULT_POLYGON_SEGMENTS, big_m: BigMPolicy::PerBranch }
    }

    pub fn proposed(radiality: Formulation) -> Self {
        Self::new(VariantKind::Proposed, radiality)
    }

    pub fn fixed_islands() -> Self {
        Self::new(VariantKind::FixedIslands, Formulation::Scf)
    }

    pub fn radial_baseline() -> Self {
        Self::new(VariantKind::RadialBaseline, Formulation::Scf)
    }
}

#[derive(Debug, Error)]
pub enum FormationError {
    #[error("scenario does not match the network: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Precondition(String),
    #[error("solve ended with status {0:?}; no solution to extract")]
    NotOptimal(SolveStatus),
    #[error("solution has {found} values but the model has {expected} variables")]
    ValueCount { expected: usize, found: usize },
    #[error("solution failed verification: {0}")]
    Verification(#[from] VerificationError),
    #[error(transparent)]
    Radiality(#[from] RadialityError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Variable handles of a built formation model, plus the inputs needed to
/// verify a solution against them.
#[derive(Debug, Clone)]
pub struct FormationHandles {
    num_vars: usize,
    variant: ModelVariant,
    network: Network,
    scenario: FaultScenario,
    merged: MergedTopology,
    radiality: Option<RadialityHandles>,
    alpha: Vec<VarId>,
    delta: Vec<VarId>,
    energized: Option<Vec<VarId>>,
    pg: Vec<Option<VarId>>,
    qg: Vec<Option<VarId>>,
    v: Vec<VarId>,
    p: Vec<VarId>,
    q: Vec<VarId>,
    big_m: Vec<f64>,
}

impl FormationHandles {
    pub fn variant(&self) -> &ModelVariant {
        &self.variant
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn scenario(&self) -> &FaultScenario {
        &self.scenario
    }

    pub fn merged(&self) -> &MergedTopology {
        &self.merged
    }

    pub fn radiality(&self) -> Option<&RadialityHandles> {
        self.radiality.as_ref()
    }

    /// Switch status per network branch.
    pub fn alpha(&self) -> &[VarId] {
        &self.alpha
    }

    /// Load pickup per network node.
    pub fn delta(&self) -> &[VarId] {
        &self.delta
    }

    /// Energization per node; `None` for the baselines, where every node is
    /// energized by construction.
    pub fn energized(&self) -> Option<&[VarId]> {
        self.energized.as_deref()
    }

    pub fn voltage(&self) -> &[VarId] {
        &self.v
    }

    /// Real and reactive branch flows, from-end to to-end, per unit.
    pub fn flows(&self) -> (&[VarId], &[VarId]) {
        (&self.p, &self.q)
    }

    /// Source dispatch per node; `None` at nodes without a source.
    pub fn generation(&self) -> (&[Option<VarId>], &[Option<VarId>]) {
        (&self.pg, &self.qg)
    }

    pub fn big_m(&self) -> &[f64] {
        &self.big_m
    }
}

/// Squared voltage spread of the network plus the largest voltage drop a
/// branch can carry at capacity.
fn big_m_values(net: &Network, policy: BigMPolicy) -> Vec<f64> {
    let vmax = net.nodes().iter().map(|n| n.v_max).fold(f64::NEG_INFINITY, f64::max);
    let vmin = net.nodes().iter().map(|n| n.v_min).fold(f64::INFINITY, f64::min);
    net.branches()
        .iter()
        .map(|b| match policy {
            BigMPolicy::PerBranch => (vmax - vmin) + 2.0 * (b.r.abs() + b.x.abs()) * b.s_cap / net.base_kva(),
            BigMPolicy::Uniform(m) => m,
        })
        .collect()
}

/// Checks that the normally-closed branches form a spanning tree of the
/// merged topology and that no branch joining two substations is closed.
fn check_radial_normal_state(net: &Network, merged: &MergedTopology) -> Result<(), FormationError> {
    let topo = merged.topology();
    let mut sel = EdgeSelection::empty(SelectionRole::Actual, topo.branch_count());
    for (k, b) in net.branches().iter().enumerate() {
        match merged.topology_branch(k) {
            Some(t) => sel.set(t, !b.normally_open),
            None if !b.normally_open => {
                return Err(FormationError::Precondition(format!(
                    "radial_baseline: branch {} joins two substations and is normally closed",
                    b.id
                )))
            }
            None => {}
        }
    }
    if is_spanning_tree(topo, &sel.with_role(SelectionRole::Fictitious))? {
        Ok(())
    } else {
        Err(FormationError::Precondition(
            "radial_baseline requires the normally-closed branches to form a spanning tree".into(),
        ))
    }
}

/// Builds the restoration MILP for one scenario.
pub fn build_mg_formation(
    net: &Network,
    scenario: &FaultScenario,
    variant: &ModelVariant,
) -> Result<(MilpModel, FormationHandles), FormationError> {
    scenario.validate(net)?;
    net.require_connected()?;
    let merged = merge_substations(net)?;
    if variant.kind == VariantKind::RadialBaseline {
        check_radial_normal_state(net, &merged)?;
    }
    let base = net.base_kva();
    let mut model = MilpModel::new(format!("mg_{}_{}", variant.kind, variant.radiality));

    // switch status, through the radiality layer or the per-source flow
    let (radiality, topo_alpha) = match variant.kind {
        VariantKind::Proposed => {
            let mut h = build_radiality(&mut model, merged.topology(), merged.root(), variant.radiality)?;
            add_subgraph_coupling(&mut model, &mut h)?;
            let alpha = h.alpha().to_vec();
            (Some(h), alpha)
        }
        VariantKind::FixedIslands | VariantKind::RadialBaseline => {
            let alpha = merged
                .topology()
                .branches()
                .iter()
                .map(|b| model.add_binary(format!("alpha[{}]", b.id)))
                .collect();
            (None, alpha)
        }
    };
    let alpha: Vec<VarId> = (0..net.branch_count())
        .map(|k| match merged.topology_branch(k) {
            Some(t) => topo_alpha[t],
            None => model.add_binary(format!("alpha[{}]", net.branch(k).id)),
        })
        .collect();

    let faulted_open: HashSet<_> = scenario.open_branches.iter().copied().collect();
    let faulted_closed: HashSet<_> = scenario.closed_branches.iter().copied().collect();
    for (k, b) in net.branches().iter().enumerate() {
        let status = if faulted_open.contains(&b.id) {
            Some(0.0)
        } else if faulted_closed.contains(&b.id) {
            Some(1.0)
        } else if !b.switchable {
            Some(if b.normally_open { 0.0 } else { 1.0 })
        } else {
            None
        };
        let forced_open = merged.topology_branch(k).is_none()
            || (variant.kind == VariantKind::RadialBaseline && b.normally_open);
        match (forced_open, status) {
            (true, Some(1.0)) => {
                // stuck closed where the variant needs it open: infeasible
                model.fix(alpha[k], 1.0)?;
                model.add_constraint(format!("forced_open[{}]", b.id), [(alpha[k], 1.0)], ConstraintSense::Le, 0.0)?;
            }
            (true, _) => model.fix(alpha[k], 0.0)?,
            (false, Some(s)) => model.fix(alpha[k], s)?,
            (false, None) => {}
        }
    }

    let delta: Vec<VarId> = net.nodes().iter().map(|n| model.add_binary(format!("delta[{}]", n.id))).collect();
    let energized = (variant.kind == VariantKind::Proposed).then(|| {
        net.nodes().iter().map(|n| model.add_binary(format!("eps[{}]", n.id))).collect::<Vec<_>>()
    });
    let mut pg = Vec::with_capacity(net.node_count());
    let mut qg = Vec::with_capacity(net.node_count());
    for n in net.nodes() {
        if n.kind.is_source() {
            pg.push(Some(model.add_continuous(format!("pg[{}]", n.id), 0.0, n.p_cap / base)?));
            qg.push(Some(model.add_continuous(format!("qg[{}]", n.id), 0.0, n.q_cap / base)?));
        } else {
            pg.push(None);
            qg.push(None);
        }
    }
    let v: Vec<VarId> = net
        .nodes()
        .iter()
        .map(|n| model.add_continuous(format!("v[{}]", n.id), n.v_min, n.v_max))
        .collect::<Result<_, _>>()?;
    let mut p = Vec::with_capacity(net.branch_count());
    let mut q = Vec::with_capacity(net.branch_count());
    for b in net.branches() {
        let s = b.s_cap / base;
        p.push(model.add_continuous(format!("P[{}]", b.id), -s, s)?);
        q.push(model.add_continuous(format!("Q[{}]", b.id), -s, s)?);
    }

    for (i, n) in net.nodes().iter().enumerate() {
        for (flows, gen, demand, name) in [
            (&p, pg[i], n.p_demand, "p_balance"),
            (&q, qg[i], n.q_demand, "q_balance"),
        ] {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            terms.extend(gen.map(|g| (g, 1.0)));
            terms.push((delta[i], -demand / base));
            for &k in net.incident(i) {
                let (from, _) = net.ends(k);
                terms.push((flows[k], if from == i { -1.0 } else { 1.0 }));
            }
            model.add_constraint(format!("{name}[{}]", n.id), terms, ConstraintSense::Eq, 0.0)?;
        }
    }

    let big_m = big_m_values(net, variant.big_m);
    for (k, b) in net.branches().iter().enumerate() {
        let (i, j) = net.ends(k);
        let m = big_m[k];
        let drop = [(v[i], 1.0), (v[j], -1.0), (p[k], -2.0 * b.r), (q[k], -2.0 * b.x)];
        let mut lower = drop.to_vec();
        lower.push((alpha[k], -m));
        model.add_constraint(format!("vdrop_lo[{}]", b.id), lower, ConstraintSense::Ge, -m)?;
        let mut upper = drop.to_vec();
        upper.push((alpha[k], m));
        model.add_constraint(format!("vdrop_hi[{}]", b.id), upper, ConstraintSense::Le, m)?;
        polygonal_capacity_cuts(&mut model, p[k], q[k], b.s_cap / base, alpha[k], variant.segments)?;
    }

    for id in &scenario.open_load_switches {
        model.fix(delta[net.node_index(*id).expect("validated")], 0.0)?;
    }
    for id in &scenario.closed_load_switches {
        let i = net.node_index(*id).expect("validated");
        match &energized {
            Some(eps) => {
                model.add_constraint(
                    format!("stuck_pickup[{id}]"),
                    [(delta[i], 1.0), (eps[i], -1.0)],
                    ConstraintSense::Ge,
                    0.0,
                )?;
            }
            None => model.fix(delta[i], 1.0)?,
        }
    }

    match &energized {
        Some(eps) => add_energization(&mut model, net, eps, &alpha)?,
        None => add_source_assignment(&mut model, &merged, &topo_alpha)?,
    }

    let objective: Vec<(VarId, f64)> = net
        .nodes()
        .iter()
        .zip(&delta)
        .map(|(n, &d)| (d, n.weight * n.p_demand))
        .collect();
    model.set_objective(ObjectiveSense::Maximize, objective)?;

    let handles = FormationHandles {
        num_vars: model.num_vars(),
        variant: *variant,
        network: net.clone(),
        scenario: scenario.clone(),
        merged,
        radiality,
        alpha,
        delta,
        energized,
        pg,
        qg,
        v,
        p,
        q,
        big_m,
    };
    Ok((model, handles))
}

/// Sources are energized; any other node is energized exactly when a closed
/// branch links it to an energized neighbour. Each product `ε_j·α` becomes a
/// McCormick variable.
fn add_energization(
    model: &mut MilpModel,
    net: &Network,
    eps: &[VarId],
    alpha: &[VarId],
) -> Result<(), ModelError> {
    for (i, n) in net.nodes().iter().enumerate() {
        if n.kind.is_source() {
            model.fix(eps[i], 1.0)?;
            continue;
        }
        let degree = net.degree(i) as f64;
        let mut products = Vec::with_capacity(net.degree(i));
        for &k in net.incident(i) {
            let j = net.opposite(k, i);
            products.push(mccormick_binary_product(model, eps[j], alpha[k])?);
        }
        let mut upper: Vec<(VarId, f64)> = products.iter().map(|&z| (z, 1.0)).collect();
        upper.push((eps[i], -degree));
        model.add_constraint(format!("energize_if_linked[{}]", n.id), upper, ConstraintSense::Le, 0.0)?;
        let mut lower: Vec<(VarId, f64)> = products.iter().map(|&z| (z, -1.0)).collect();
        lower.push((eps[i], 1.0));
        model.add_constraint(format!("energize_only_if_linked[{}]", n.id), lower, ConstraintSense::Le, 0.0)?;
    }
    Ok(())
}

/// Baseline island structure on the merged topology: every node is assigned
/// to exactly one source, closed branches join nodes with the same
/// assignment, and a flow from all sources that reaches every other node
/// over `|N| − K` closed branches makes the islands trees.
fn add_source_assignment(
    model: &mut MilpModel,
    merged: &MergedTopology,
    alpha: &[VarId],
) -> Result<(), ModelError> {
    let topo = merged.topology();
    let n = topo.node_count();
    let sources: Vec<usize> = topo.sources().collect();
    let tree_edges = (n - sources.len()) as f64;

    let y: Vec<Vec<VarId>> = topo
        .nodes()
        .iter()
        .map(|node| {
            sources
                .iter()
                .map(|&s| model.add_binary(format!("assign[{}][{}]", node.id, topo.node(s).id)))
                .collect()
        })
        .collect();
    for (i, node) in topo.nodes().iter().enumerate() {
        model.add_constraint(
            format!("assign_one[{}]", node.id),
            y[i].iter().map(|&v| (v, 1.0)),
            ConstraintSense::Eq,
            1.0,
        )?;
    }
    for (k, &s) in sources.iter().enumerate() {
        model.fix(y[s][k], 1.0)?;
    }
    for (l, b) in topo.branches().iter().enumerate() {
        let (i, j) = topo.ends(l);
        for (k, &s) in sources.iter().enumerate() {
            let sid = topo.node(s).id;
            model.add_constraint(
                format!("assign_same[{}][{sid}]+", b.id),
                [(y[i][k], 1.0), (y[j][k], -1.0), (alpha[l], 1.0)],
                ConstraintSense::Le,
                1.0,
            )?;
            model.add_constraint(
                format!("assign_same[{}][{sid}]-", b.id),
                [(y[j][k], 1.0), (y[i][k], -1.0), (alpha[l], 1.0)],
                ConstraintSense::Le,
                1.0,
            )?;
        }
    }

    let flows: Vec<(VarId, VarId)> = topo
        .branches()
        .iter()
        .map(|b| {
            Ok((
                model.add_continuous(format!("G[{}]+", b.id), 0.0, tree_edges)?,
                model.add_continuous(format!("G[{}]-", b.id), 0.0, tree_edges)?,
            ))
        })
        .collect::<Result<_, ModelError>>()?;
    for (i, node) in topo.nodes().iter().enumerate() {
        if node.kind.is_source() {
            continue;
        }
        let mut terms = Vec::new();
        for &l in topo.incident(i) {
            let (fw, bw) = flows[l];
            let (from, _) = topo.ends(l);
            if from == i {
                terms.extend([(bw, 1.0), (fw, -1.0)]);
            } else {
                terms.extend([(fw, 1.0), (bw, -1.0)]);
            }
        }
        model.add_constraint(format!("island_flow[{}]", node.id), terms, ConstraintSense::Eq, 1.0)?;
    }
    for (l, b) in topo.branches().iter().enumerate() {
        let (fw, bw) = flows[l];
        model.add_constraint(format!("island_cap[{}]+", b.id), [(fw, 1.0), (alpha[l], -tree_edges)], ConstraintSense::Le, 0.0)?;
        model.add_constraint(format!("island_cap[{}]-", b.id), [(bw, 1.0), (alpha[l], -tree_edges)], ConstraintSense::Le, 0.0)?;
    }
    model.add_constraint("island_edges", alpha.iter().map(|&a| (a, 1.0)), ConstraintSense::Eq, tree_edges)?;
    Ok(())
}

/// Outcome of building, solving and (when optimal) verifying one restoration
/// problem.
#[derive(Debug, Clone)]
pub struct RestorationRun {
    pub outcome: SolveOutcome,
    pub solution: Option<RestorationSolution>,
    pub num_vars: usize,
    pub num_constraints: usize,
}

pub fn solve_restoration(
    net: &Network,
    scenario: &FaultScenario,
    variant: &ModelVariant,
    opts: &SolveOptions,
) -> Result<RestorationRun, FormationError> {
    let (model, handles) = build_mg_formation(net, scenario, variant)?;
    let outcome = solve(&model, opts)?;
    let solution = if outcome.is_optimal() { Some(extract_solution(&outcome, &handles)?) } else { None };
    Ok(RestorationRun {
        outcome,
        solution,
        num_vars: model.num_vars(),
        num_constraints: model.num_constraints(),
    })
}
