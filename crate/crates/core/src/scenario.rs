//! Fault scenarios and their seeded generation.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BranchId, Network, NodeId};

/// Faulted branches and load switches. Serialized with the field names
/// `seed`, `L_o`, `L_c`, `N_o`, `N_c`, `label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultScenario {
    pub seed: u64,
    /// Branches stuck open.
    #[serde(rename = "L_o")]
    pub open_branches: Vec<BranchId>,
    /// Branches stuck closed.
    #[serde(rename = "L_c")]
    pub closed_branches: Vec<BranchId>,
    /// Nodes whose load switch is stuck open.
    #[serde(rename = "N_o")]
    pub open_load_switches: Vec<NodeId>,
    /// Nodes whose load switch is stuck closed.
    #[serde(rename = "N_c")]
    pub closed_load_switches: Vec<NodeId>,
    pub label: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario references unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("scenario references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("branch {0} is listed more than once")]
    RepeatedBranch(BranchId),
    #[error("node {0} is listed more than once")]
    RepeatedNode(NodeId),
    #[error("node {0} is a source and cannot carry a load switch fault")]
    SourceLoadSwitch(NodeId),
    #[error("cannot draw {requested} {what} faults from a population of {available}")]
    CountTooLarge { what: &'static str, requested: usize, available: usize },
    #[error("open probability {0} is outside [0, 1]")]
    Probability(f64),
}

impl FaultScenario {
    pub fn empty(label: impl Into<String>) -> Self {
        FaultScenario {
            seed: 0,
            open_branches: Vec::new(),
            closed_branches: Vec::new(),
            open_load_switches: Vec::new(),
            closed_load_switches: Vec::new(),
            label: label.into(),
        }
    }

    pub fn fault_count(&self) -> usize {
        self.open_branches.len()
            + self.closed_branches.len()
            + self.open_load_switches.len()
            + self.closed_load_switches.len()
    }

    /// Checks that every id exists, no id appears twice across the open and
    /// closed lists, and no source node carries a load switch fault.
    pub fn validate(&self, net: &Network) -> Result<(), ScenarioError> {
        let mut branches = BTreeSet::new();
        for &b in self.open_branches.iter().chain(&self.closed_branches) {
            net.branch_index(b).ok_or(ScenarioError::UnknownBranch(b))?;
            if !branches.insert(b) {
                return Err(ScenarioError::RepeatedBranch(b));
            }
        }
        let mut nodes = BTreeSet::new();
        for &n in self.open_load_switches.iter().chain(&self.closed_load_switches) {
            let pos = net.node_index(n).ok_or(ScenarioError::UnknownNode(n))?;
            if net.node(pos).kind.is_source() {
                return Err(ScenarioError::SourceLoadSwitch(n));
            }
            if !nodes.insert(n) {
                return Err(ScenarioError::RepeatedNode(n));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultCounts {
    pub branch_faults: usize,
    pub load_switch_faults: usize,
}

pub const DEFAULT_OPEN_PROB: f64 = 0.5;

/// Node positions eligible for load switch faults: non-source nodes with
/// non-zero demand.
pub fn load_switch_population(net: &Network) -> Vec<usize> {
    (0..net.node_count())
        .filter(|&i| {
            let n = net.node(i);
            !n.kind.is_source() && (n.p_demand > 0.0 || n.q_demand > 0.0)
        })
        .collect()
}

/// Draws `counts.branch_faults` distinct branches and
/// `counts.load_switch_faults` distinct load nodes, each faulted open with
/// probability `open_prob` and closed otherwise. Uses ChaCha8 seeded with
/// `seed`, so the result is identical on every platform. Id lists are sorted.
pub fn generate_scenario(
    net: &Network,
    seed: u64,
    counts: FaultCounts,
    open_prob: f64,
) -> Result<FaultScenario, ScenarioError> {
    if !(0.0..=1.0).contains(&open_prob) {
        return Err(ScenarioError::Probability(open_prob));
    }
    let loads = load_switch_population(net);
    if counts.branch_faults > net.branch_count() {
        return Err(ScenarioError::CountTooLarge {
            what: "branch",
            requested: counts.branch_faults,
            available: net.branch_count(),
        });
    }
    if counts.load_switch_faults > loads.len() {
        return Err(ScenarioError::CountTooLarge {
            what: "load switch",
            requested: counts.load_switch_faults,
            available: loads.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenario = FaultScenario::empty(format!("seed-{seed}"));
    scenario.seed = seed;
    for k in sample(&mut rng, net.branch_count(), counts.branch_faults) {
        let id = net.branch(k).id;
        if rng.random_bool(open_prob) {
            scenario.open_branches.push(id);
        } else {
            scenario.closed_branches.push(id);
        }
    }
    for k in sample(&mut rng, loads.len(), counts.load_switch_faults) {
        let id = net.node(loads[k]).id;
        if rng.random_bool(open_prob) {
            scenario.open_load_switches.push(id);
        } else {
            scenario.closed_load_switches.push(id);
        }
    }
    scenario.open_branches.sort();
    scenario.closed_branches.sort();
    scenario.open_load_switches.sort();
    scenario.closed_load_switches.sort();
    Ok(scenario)
}

/// Fault counts for batch runs: branch faults uniform in
/// `[min(5, |L|), ⌊0.8·|L|⌋]`, load switch faults uniform in
/// `[0, ⌊0.2·|loads|⌋]`.
pub fn random_counts<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> FaultCounts {
    let l = net.branch_count();
    let hi = (l * 4 / 5).max(l.min(5));
    let lo = l.min(5);
    let loads = load_switch_population(net).len();
    FaultCounts {
        branch_faults: rng.random_range(lo..=hi),
        load_switch_faults: rng.random_range(0..=loads / 5),
    }
}

/// `n` scenarios for a batch. Each scenario seed comes from a ChaCha8 stream
/// seeded with `master_seed`; its fault counts come from a second stream of
/// the scenario seed, and the faults themselves from [`generate_scenario`].
pub fn generate_batch(
    net: &Network,
    n: usize,
    master_seed: u64,
    open_prob: f64,
) -> Result<Vec<FaultScenario>, ScenarioError> {
    let mut master = ChaCha8Rng::seed_from_u64(master_seed);
    (0..n)
        .map(|i| {
            let seed = master.next_u64();
            let mut count_rng = ChaCha8Rng::seed_from_u64(seed);
            count_rng.set_stream(1);
            let counts = random_counts(net, &mut count_rng);
            let mut s = generate_scenario(net, seed, counts, open_prob)?;
            s.label = format!("s{i:04}");
            Ok(s)
        })
        .collect()
}
