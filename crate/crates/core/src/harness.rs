//! Batch experiments over random fault scenarios and the statistics reported
//! from them.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{
    dg_utilization, restored_load, solve_restoration, ModelVariant, RestorationSolution, VariantKind,
};
use crate::graph::Network;
use crate::io::{BatchRow, RowStatus};
use crate::milp::SolveOptions;
use crate::radiality::Formulation;
use crate::scenario::{generate_batch, load_switch_population, FaultScenario, ScenarioError, DEFAULT_OPEN_PROB};

pub const DEFAULT_SCENARIOS: usize = 200;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("batch configuration: {0}")]
    Config(String),
}

/// A (variant, radiality) pair identifying one column of results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tag {
    pub variant: VariantKind,
    pub radiality: Formulation,
}

impl Tag {
    pub fn new(variant: VariantKind, radiality: Formulation) -> Self {
        Tag { variant, radiality }
    }

    fn of(row: &BatchRow) -> Self {
        Tag { variant: row.variant, radiality: row.radiality }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.variant, self.radiality)
    }
}

impl FromStr for Tag {
    type Err = String;

    /// `variant/radiality`, or a bare variant name meaning its default
    /// radiality (scf).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (v, r) = s.split_once('/').unwrap_or((s, "scf"));
        Ok(Tag { variant: v.parse()?, radiality: r.parse()? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub scenarios: usize,
    pub seed: u64,
    pub open_prob: f64,
    pub variants: Vec<VariantKind>,
    /// Radiality formulations for the proposed variant. The baselines run
    /// once per scenario with their own flow formulation, tagged `scf`.
    pub radiality: Vec<Formulation>,
    pub solve: SolveOptions,
    /// Concurrent solves; 0 means one per available core.
    pub workers: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            scenarios: DEFAULT_SCENARIOS,
            seed: 1,
            open_prob: DEFAULT_OPEN_PROB,
            variants: VariantKind::ALL.to_vec(),
            radiality: vec![Formulation::Scf, Formulation::Dmcf],
            solve: SolveOptions::default(),
            workers: 0,
        }
    }
}

impl BatchConfig {
    /// The distinct (variant, radiality) pairs solved per scenario.
    pub fn tags(&self) -> Vec<Tag> {
        let mut tags = Vec::new();
        for &v in &self.variants {
            if v.uses_radiality_formulation() {
                tags.extend(self.radiality.iter().map(|&r| Tag::new(v, r)));
            } else {
                tags.push(Tag::new(v, Formulation::Scf));
            }
        }
        tags.sort();
        tags.dedup();
        tags
    }
}

/// Settings and generator parameters recorded with a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub config: BatchConfig,
    pub tags: Vec<Tag>,
    /// Inclusive range of branch faults drawn per scenario.
    pub branch_faults: (usize, usize),
    /// Inclusive range of load switch faults drawn per scenario.
    pub load_switch_faults: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub metadata: BatchMetadata,
    pub scenarios: Vec<FaultScenario>,
    /// Ordered by scenario, then by tag.
    pub rows: Vec<BatchRow>,
    /// Verified solution of each optimal row, aligned with `rows`.
    pub solutions: Vec<Option<RestorationSolution>>,
}

fn solve_row(
    net: &Network,
    index: usize,
    scenario: &FaultScenario,
    tag: Tag,
    opts: &SolveOptions,
) -> (BatchRow, Option<RestorationSolution>) {
    let start = Instant::now();
    let variant = ModelVariant::new(tag.variant, tag.radiality);
    let mut row = BatchRow {
        scenario: index,
        seed: scenario.seed,
        variant: tag.variant,
        radiality: tag.radiality,
        status: RowStatus::Error,
        objective: None,
        restored_kw: None,
        utilization: None,
        nodes_explored: None,
        wall_ms: 0.0,
        error: None,
    };
    let mut solution = None;
    match solve_restoration(net, scenario, &variant, opts) {
        Ok(run) => {
            row.status = run.outcome.status.into();
            row.nodes_explored = run.outcome.nodes;
            if let Some(sol) = &run.solution {
                row.objective = Some(sol.objective);
                row.restored_kw = Some(restored_load(sol));
                row.utilization = dg_utilization(sol);
            }
            solution = run.solution;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    log::debug!("scenario {index} {tag}: {:?} in {:.1} ms", row.status, row.wall_ms);
    (row, solution)
}

/// Solves every tag of the config on each given scenario. Solves run on a
/// bounded pool; rows come back in scenario order whatever the completion
/// order. A failed solve becomes an `error` row.
pub fn run_scenarios(
    net: &Network,
    scenarios: &[FaultScenario],
    config: &BatchConfig,
) -> Result<(Vec<BatchRow>, Vec<Option<RestorationSolution>>), HarnessError> {
    let tags = config.tags();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build()?;
    let jobs: Vec<(usize, Tag)> =
        (0..scenarios.len()).flat_map(|i| tags.iter().map(move |&t| (i, t))).collect();
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(i, tag)| solve_row(net, i, &scenarios[i], tag, &config.solve))
            .unzip()
    }))
}

pub fn run_batch(net: &Network, config: &BatchConfig) -> Result<BatchResult, HarnessError> {
    if config.variants.is_empty() {
        return Err(HarnessError::Config("no variants requested".into()));
    }
    if config.radiality.is_empty() && config.variants.iter().any(|v| v.uses_radiality_formulation()) {
        return Err(HarnessError::Config("no radiality formulation for the proposed variant".into()));
    }
    let scenarios = generate_batch(net, config.scenarios, config.seed, config.open_prob)?;
    let (rows, solutions) = run_scenarios(net, &scenarios, config)?;
    let l = net.branch_count();
    let metadata = BatchMetadata {
        config: config.clone(),
        tags: config.tags(),
        branch_faults: (l.min(5), (l * 4 / 5).max(l.min(5))),
        load_switch_faults: (0, load_switch_population(net).len() / 5),
    };
    Ok(BatchResult { metadata, scenarios, rows, solutions })
}

/// Population statistics; the median of an even count is the lower middle
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub avg: f64,
    pub std: f64,
    pub max: f64,
    pub med: f64,
    pub min: f64,
}

pub fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let avg = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / n;
    Some(Stats {
        count: sorted.len(),
        avg,
        std: var.sqrt(),
        max: sorted[sorted.len() - 1],
        med: sorted[(sorted.len() - 1) / 2],
        min: sorted[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub tag: Tag,
    pub rows: usize,
    pub optimal: usize,
    /// Scenarios proven infeasible.
    pub infeasible: usize,
    /// Rows with status limit, unbounded or error.
    pub other: usize,
    pub restored_kw: Option<Stats>,
    pub utilization: Option<Stats>,
    pub nodes_explored: Option<Stats>,
    pub wall_ms: Option<Stats>,
}

/// Per-tag statistics over optimal rows plus status counts, in tag order.
pub fn summarize(rows: &[BatchRow]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<Tag, Vec<&BatchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(Tag::of(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(tag, rs)| {
            let optimal: Vec<&&BatchRow> = rs.iter().filter(|r| r.status == RowStatus::Optimal).collect();
            let collect = |f: &dyn Fn(&BatchRow) -> Option<f64>| -> Vec<f64> {
                optimal.iter().filter_map(|r| f(r)).collect()
            };
            GroupSummary {
                tag,
                rows: rs.len(),
                optimal: optimal.len(),
                infeasible: rs.iter().filter(|r| r.status == RowStatus::Infeasible).count(),
                other: rs.iter().filter(|r| !matches!(r.status, RowStatus::Optimal | RowStatus::Infeasible)).count(),
                restored_kw: stats(&collect(&|r| r.restored_kw)),
                utilization: stats(&collect(&|r| r.utilization)),
                nodes_explored: stats(&collect(&|r| r.nodes_explored.map(|n| n as f64))),
                wall_ms: stats(&collect(&|r| Some(r.wall_ms))),
            }
        })
        .collect()
}

/// Explored-node comparison of two tags over scenarios where both solved to
/// optimality and both reported a node count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeComparison {
    pub a: Tag,
    pub b: Tag,
    pub fewer: usize,
    pub equal: usize,
    pub more: usize,
}

impl NodeComparison {
    pub fn compared(&self) -> usize {
        self.fewer + self.equal + self.more
    }
}

fn by_scenario(rows: &[BatchRow], tag: Tag) -> HashMap<usize, &BatchRow> {
    rows.iter().filter(|r| Tag::of(r) == tag).map(|r| (r.scenario, r)).collect()
}

fn paired(rows: &[BatchRow], a: Tag, b: Tag) -> Vec<(&BatchRow, &BatchRow)> {
    let bs = by_scenario(rows, b);
    let mut pairs: Vec<_> = by_scenario(rows, a)
        .into_iter()
        .filter_map(|(s, ra)| bs.get(&s).map(|&rb| (ra, rb)))
        .collect();
    pairs.sort_by_key(|(r, _)| r.scenario);
    pairs
}

pub fn compare_nodes(rows: &[BatchRow], a: Tag, b: Tag) -> NodeComparison {
    let mut cmp = NodeComparison { a, b, fewer: 0, equal: 0, more: 0 };
    for (ra, rb) in paired(rows, a, b) {
        if ra.status != RowStatus::Optimal || rb.status != RowStatus::Optimal {
            continue;
        }
        if let (Some(na), Some(nb)) = (ra.nodes_explored, rb.nodes_explored) {
            match na.cmp(&nb) {
                std::cmp::Ordering::Less => cmp.fewer += 1,
                std::cmp::Ordering::Equal => cmp.equal += 1,
                std::cmp::Ordering::Greater => cmp.more += 1,
            }
        }
    }
    cmp
}

fn rel_gap(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveMismatch {
    pub scenario: usize,
    pub a: f64,
    pub b: f64,
}

/// Scenarios where both tags are optimal but their objectives differ by
/// more than `rel_tol` relative, and scenarios where exactly one of them is
/// optimal (reported with NaN for the missing side).
pub fn objective_mismatches(rows: &[BatchRow], a: Tag, b: Tag, rel_tol: f64) -> Vec<ObjectiveMismatch> {
    paired(rows, a, b)
        .into_iter()
        .filter_map(|(ra, rb)| {
            let (oa, ob) = (ra.objective, rb.objective);
            let bad = match (oa, ob) {
                (Some(x), Some(y)) => rel_gap(x, y) > rel_tol,
                (None, None) => false,
                _ => true,
            };
            bad.then(|| ObjectiveMismatch {
                scenario: ra.scenario,
                a: oa.unwrap_or(f64::NAN),
                b: ob.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingViolation {
    pub scenario: usize,
    /// The larger search space.
    pub outer: Tag,
    pub inner: Tag,
    pub reason: String,
}

/// Checks `restored(outer) >= restored(inner)` within `rel_tol` relative on
/// every scenario where `inner` is optimal, and that `outer` is optimal there
/// too.
pub fn nesting_violations(rows: &[BatchRow], outer: Tag, inner: Tag, rel_tol: f64) -> Vec<NestingViolation> {
    paired(rows, outer, inner)
        .into_iter()
        .filter_map(|(ro, ri)| {
            let inner_obj = ri.objective.filter(|_| ri.status == RowStatus::Optimal)?;
            let reason = match ro.objective.filter(|_| ro.status == RowStatus::Optimal) {
                None => format!("{outer} is {:?} where {inner} is optimal", ro.status),
                Some(o) if o < inner_obj && rel_gap(o, inner_obj) > rel_tol => {
                    format!("{outer} restores {o} < {inner_obj}")
                }
                Some(_) => return None,
            };
            Some(NestingViolation { scenario: ro.scenario, outer, inner, reason })
        })
        .collect()
}

fn fmt_stat(s: Option<Stats>, f: impl Fn(&Stats) -> f64, digits: usize) -> String {
    s.map_or_else(|| "-".into(), |s| format!("{:.*}", digits, f(&s)))
}

/// Text tables: infeasibility counts, then avg/std/max/med/min of restored
/// load, DG utilization and explored nodes per tag.
pub fn format_summary(groups: &[GroupSummary]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<24} {:>6} {:>8} {:>11} {:>6}", "tag", "rows", "optimal", "infeasible", "other").unwrap();
    for g in groups {
        writeln!(out, "{:<24} {:>6} {:>8} {:>11} {:>6}", g.tag.to_string(), g.rows, g.optimal, g.infeasible, g.other)
            .unwrap();
    }
    for (title, pick, digits) in [
        ("restored load (kW)", (|g: &GroupSummary| g.restored_kw) as fn(&GroupSummary) -> Option<Stats>, 1),
        ("DG utilization", |g: &GroupSummary| g.utilization, 4),
        ("explored nodes", |g: &GroupSummary| g.nodes_explored, 1),
    ] {
        writeln!(out, "\n{title}").unwrap();
        writeln!(out, "{:<24} {:>10} {:>10} {:>10} {:>10} {:>10}", "tag", "avg", "std", "max", "med", "min").unwrap();
        for g in groups {
            let s = pick(g);
            writeln!(
                out,
                "{:<24} {:>10} {:>10} {:>10} {:>10} {:>10}",
                g.tag.to_string(),
                fmt_stat(s, |s| s.avg, digits),
                fmt_stat(s, |s| s.std, digits),
                fmt_stat(s, |s| s.max, digits),
                fmt_stat(s, |s| s.med, digits),
                fmt_stat(s, |s| s.min, digits),
            )
            .unwrap();
        }
    }
    out
}

pub fn format_comparison(c: &NodeComparison) -> String {
    format!(
        "explored nodes, {a} (N_a) vs {b} (N_b) over {n} scenarios\n  N_a < N_b: {}\n  N_a = N_b: {}\n  N_a > N_b: {}\n",
        c.fewer,
        c.equal,
        c.more,
        a = c.a,
        b = c.b,
        n = c.compared(),
    )
}
