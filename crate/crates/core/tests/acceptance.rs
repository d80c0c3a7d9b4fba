//! Acceptance checks for the library as a whole. This target has no libtest
//! harness: it runs each check in turn and prints one `[PASS]` or `[FAIL]`
//! line per check, exiting non-zero if any failed. Positional arguments act
//! as substring filters on the check keys.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::panic;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use gridforest::formation::{restored_load, solve_restoration, ModelVariant, RestorationSolution, VariantKind};
use gridforest::graph::{
    count_spanning_trees, enumerate_spanning_forests, enumerate_spanning_trees, is_spanning_forest,
    EdgeSelection, Network, NodeId, NodeKind,
};
use gridforest::harness::{
    compare_nodes, format_comparison, nesting_violations, objective_mismatches, run_batch, summarize,
    BatchConfig, BatchResult, Tag,
};
use gridforest::io::{ieee33, RowStatus};
use gridforest::milp::{
    mccormick_binary_product, polygonal_capacity_cuts, solve, MilpModel, ObjectiveSense,
    SolveOptions,
};
use gridforest::radiality::{
    add_subgraph_coupling, build_radiality, integer_feasible_set, lp_integrality_trials, merge_substations,
    Formulation,
};
use gridforest::scenario::FaultScenario;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROOT: NodeId = NodeId(1);
const REL_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Check {
    key: &'static str,
    run: fn() -> Outcome,
}

const CHECKS: [Check; 9] = [
    Check { key: "forest-oracle-equivalence", run: forest_oracle_equivalence },
    Check { key: "matrix-tree-count", run: matrix_tree_count },
    Check { key: "dmcf-lp-integrality", run: dmcf_lp_integrality },
    Check { key: "model-size-formulas", run: model_size_formulas },
    Check { key: "full-restoration-33", run: full_restoration },
    Check { key: "search-space-nesting", run: search_space_nesting },
    Check { key: "radiality-objective-invariance", run: radiality_invariance },
    Check { key: "linearization-exactness", run: linearization_exactness },
    Check { key: "solution-verification", run: solution_verification },
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<(usize, &Check)> = CHECKS
        .iter()
        .enumerate()
        .filter(|(_, c)| filters.is_empty() || filters.iter().any(|f| c.key.contains(f.as_str())))
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, check) in &selected {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check.run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {} {}: {detail} ({secs:.1} s)", i + 1, check.key),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {} {}: {why} ({secs:.1} s)", i + 1, check.key);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", selected.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Twenty seeded connected multigraphs with 4 to 8 nodes and at most 10
/// edges: a random tree plus random extra edges, parallel ones allowed.
fn random_graphs() -> Vec<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f0e5);
    (0..20)
        .map(|_| {
            let n: u32 = rng.random_range(4..=8);
            let m: u32 = rng.random_range(n - 1..=10);
            let mut edges: Vec<(u32, u32)> = (2..=n).map(|v| (rng.random_range(1..v), v)).collect();
            while edges.len() < m as usize {
                let a = rng.random_range(1..=n);
                let b = rng.random_range(1..=n);
                if a != b {
                    edges.push((a, b));
                }
            }
            edges.shuffle(&mut rng);
            for e in &mut edges {
                if rng.random_bool(0.5) {
                    *e = (e.1, e.0);
                }
            }
            Network::from_edge_list(n, &edges).expect("generated graph is valid")
        })
        .collect()
}

fn named_graphs() -> Vec<(&'static str, Network, u128)> {
    let g = |n, e: &[(u32, u32)]| Network::from_edge_list(n, e).unwrap();
    vec![
        ("triangle", g(3, &[(1, 2), (2, 3), (1, 3)]), 3),
        ("4-cycle", g(4, &[(1, 2), (2, 3), (3, 4), (4, 1)]), 4),
        ("path", g(4, &[(1, 2), (2, 3), (3, 4)]), 1),
    ]
}

fn solve_opts() -> SolveOptions {
    SolveOptions::default()
}

/// Acyclicity by union-find, written independently of the library oracles.
fn acyclic(net: &Network, bits: &[bool]) -> bool {
    let mut uf = UnionFind::new(net.node_count());
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .all(|(k, _)| {
            let (a, b) = net.ends(k);
            uf.union(a, b)
        })
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// False when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
        ra != rb
    }
}

fn forest_oracle_equivalence() -> Outcome {
    let opts = solve_opts();
    let start = Instant::now();
    let mut forests_total = 0;
    for (g, net) in random_graphs().iter().enumerate() {
        let l = net.branch_count();
        let oracle: BTreeSet<Vec<bool>> =
            enumerate_spanning_forests(net).unwrap().into_iter().map(|s| s.bits().to_vec()).collect();
        let brute: BTreeSet<Vec<bool>> = (0u64..1 << l)
            .map(|mask| (0..l).map(|k| mask >> k & 1 == 1).collect::<Vec<_>>())
            .filter(|bits| acyclic(net, bits))
            .collect();
        ensure!(oracle == brute, "graph {g}: forest enumeration disagrees with brute force");
        for f in [Formulation::Scf, Formulation::Dmcf] {
            let mut model = MilpModel::new(format!("oracle_{g}_{f}"));
            let mut handles = build_radiality(&mut model, net, ROOT, f).unwrap();
            add_subgraph_coupling(&mut model, &mut handles).unwrap();
            let feasible: BTreeSet<Vec<bool>> =
                integer_feasible_set(&model, handles.alpha(), &opts).unwrap().into_iter().collect();
            ensure!(
                feasible == oracle,
                "graph {g} ({} nodes, {l} edges) {f}: {} feasible alpha vs {} forests",
                net.node_count(),
                feasible.len(),
                oracle.len()
            );
        }
        forests_total += oracle.len();
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(300), "took {:.0} s, limit 300 s", took.as_secs_f64());
    Ok(format!("20 graphs, {forests_total} forests matched under scf and dmcf"))
}

/// Determinant of the Laplacian with the first row and column removed, by
/// Gaussian elimination in floating point.
fn kirchhoff_f64(net: &Network) -> f64 {
    let n = net.node_count();
    let mut lap = vec![vec![0.0; n]; n];
    for k in 0..net.branch_count() {
        let (a, b) = net.ends(k);
        lap[a][a] += 1.0;
        lap[b][b] += 1.0;
        lap[a][b] -= 1.0;
        lap[b][a] -= 1.0;
    }
    let mut m: Vec<Vec<f64>> = lap[1..].iter().map(|r| r[1..].to_vec()).collect();
    let d = n - 1;
    let mut det = 1.0;
    for c in 0..d {
        let p = (c..d).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        if m[p][c].abs() < 1e-12 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..d {
            let factor = m[r][c] / m[c][c];
            for k in c..d {
                m[r][k] -= factor * m[c][k];
            }
        }
    }
    det
}

fn matrix_tree_count() -> Outcome {
    let mut trees_total = 0;
    for (g, net) in random_graphs().iter().enumerate() {
        let enumerated = enumerate_spanning_trees(net).unwrap().len() as u128;
        let counted = count_spanning_trees(net).unwrap();
        let float = kirchhoff_f64(net).round() as u128;
        ensure!(
            enumerated == counted && counted == float,
            "graph {g}: enumerated {enumerated}, counted {counted}, float determinant {float}"
        );
        trees_total += counted;
    }
    for (name, net, expected) in named_graphs() {
        let enumerated = enumerate_spanning_trees(&net).unwrap().len() as u128;
        let counted = count_spanning_trees(&net).unwrap();
        ensure!(
            enumerated == expected && counted == expected,
            "{name}: enumerated {enumerated}, counted {counted}, expected {expected}"
        );
    }
    Ok(format!("20 graphs ({trees_total} trees) plus triangle=3, 4-cycle=4, path=1"))
}

fn dmcf_lp_integrality() -> Outcome {
    let opts = solve_opts();
    let mut worst: f64 = 0.0;
    let mut solves = 0;
    for (g, net) in random_graphs().iter().enumerate() {
        for coupled in [false, true] {
            let r = lp_integrality_trials(net, ROOT, Formulation::Dmcf, coupled, 100, 7000 + g as u64, &opts)
                .unwrap();
            ensure!(
                r.integral(1e-6),
                "graph {g} coupled={coupled}: max fractionality {:.3e}, {} invalid roundings, {} non-optimal",
                r.max_fractionality,
                r.invalid_roundings,
                r.non_optimal
            );
            worst = worst.max(r.max_fractionality);
            solves += r.trials;
        }
    }
    Ok(format!("{solves} LP optima integral (max fractionality {worst:.1e}), all roundings valid"))
}

fn model_size_formulas() -> Outcome {
    let mut graphs: Vec<(String, Network)> =
        named_graphs().into_iter().map(|(name, net, _)| (name.to_string(), net)).collect();
    graphs.extend(random_graphs().into_iter().take(2).enumerate().map(|(i, n)| (format!("random {i}"), n)));
    let mut seen = Vec::new();
    for (name, net) in &graphs {
        let (n, l) = (net.node_count(), net.branch_count());
        for f in [Formulation::Scf, Formulation::Dmcf] {
            let mut model = MilpModel::new("size");
            build_radiality(&mut model, net, ROOT, f).unwrap();
            let expected = match f {
                Formulation::Dmcf => (2 * n * l + l, n * n + 2 * n * l - n - l + 1),
                Formulation::Scf => (3 * l, n + 2 * l),
            };
            let got = (model.num_vars(), model.num_constraints());
            ensure!(got == expected, "{name} {f}: built {got:?}, expected {expected:?}");
        }
        seen.push(format!("{name} ({n},{l})"));
    }
    let mut tri = MilpModel::new("triangle");
    build_radiality(&mut tri, &graphs[0].1, ROOT, Formulation::Dmcf).unwrap();
    ensure!(
        (tri.num_vars(), tri.num_constraints()) == (21, 22),
        "triangle dmcf has {} vars / {} constraints",
        tri.num_vars(),
        tri.num_constraints()
    );
    Ok(format!("{}; triangle dmcf 21 vars / 22 constraints", seen.join(", ")))
}

fn full_restoration() -> Outcome {
    let net = ieee33();
    let scenario = FaultScenario::empty("no-faults");
    let mut parts = Vec::new();
    for f in [Formulation::Dmcf, Formulation::Scf] {
        let start = Instant::now();
        let run = solve_restoration(&net, &scenario, &ModelVariant::proposed(f), &solve_opts()).unwrap();
        let took = start.elapsed();
        let sol = run.solution.ok_or(format!("{f}: status {:?}", run.outcome.status))?;
        ensure!(sol.objective == 3715.0, "{f}: objective {}", sol.objective);
        ensure!(restored_load(&sol) == 3715.0, "{f}: restored {} kW", restored_load(&sol));
        ensure!(took < Duration::from_secs(10), "{f}: took {:.1} s", took.as_secs_f64());
        parts.push(format!("{f} 3715 kW in {:.2} s", took.as_secs_f64()));
    }
    Ok(parts.join(", "))
}

fn batch() -> &'static BatchResult {
    static BATCH: OnceLock<BatchResult> = OnceLock::new();
    BATCH.get_or_init(|| {
        let config = BatchConfig { scenarios: 200, seed: 1, workers: 0, ..BatchConfig::default() };
        run_batch(&ieee33(), &config).expect("batch runs")
    })
}

fn tag(v: VariantKind, f: Formulation) -> Tag {
    Tag::new(v, f)
}

fn search_space_nesting() -> Outcome {
    let rows = &batch().rows;
    let fixed = tag(VariantKind::FixedIslands, Formulation::Scf);
    let radial = tag(VariantKind::RadialBaseline, Formulation::Scf);
    let mut pairs = Vec::new();
    for f in [Formulation::Scf, Formulation::Dmcf] {
        let proposed = tag(VariantKind::Proposed, f);
        pairs.push((proposed, fixed));
        pairs.push((proposed, radial));
    }
    pairs.push((fixed, radial));
    for (outer, inner) in pairs {
        let bad = nesting_violations(rows, outer, inner, REL_TOL);
        ensure!(bad.is_empty(), "{outer} vs {inner}: {} violations, first {:?}", bad.len(), bad[0]);
    }
    let groups = summarize(rows);
    let infeasible = |t: Tag| groups.iter().find(|g| g.tag == t).map(|g| g.infeasible).unwrap_or(usize::MAX);
    let (fi, ri) = (infeasible(fixed), infeasible(radial));
    let mut counts = Vec::new();
    for f in [Formulation::Scf, Formulation::Dmcf] {
        let pi = infeasible(tag(VariantKind::Proposed, f));
        ensure!(pi <= fi && pi <= ri, "infeasible counts proposed/{f} {pi}, fixed {fi}, radial {ri}");
        counts.push(format!("proposed/{f} {pi}"));
    }
    ensure!(fi <= ri, "infeasible counts fixed {fi} > radial {ri}");
    Ok(format!(
        "200 scenarios nested; infeasible: {}, fixed_islands {fi}, radial_baseline {ri}",
        counts.join(", ")
    ))
}

fn radiality_invariance() -> Outcome {
    let rows = &batch().rows;
    let scf = tag(VariantKind::Proposed, Formulation::Scf);
    let dmcf = tag(VariantKind::Proposed, Formulation::Dmcf);
    let bad = objective_mismatches(rows, scf, dmcf, REL_TOL);
    ensure!(bad.is_empty(), "{} mismatches, first {:?}", bad.len(), bad[0]);
    let optimal = rows.iter().filter(|r| r.variant == VariantKind::Proposed && r.status == RowStatus::Optimal).count();
    let table = compare_nodes(rows, dmcf, scf);
    eprint!("{}", format_comparison(&table));
    Ok(format!(
        "{} optimal pairs agree; dmcf explored fewer/equal/more nodes than scf on {}/{}/{} scenarios",
        optimal / 2,
        table.fewer,
        table.equal,
        table.more
    ))
}

fn linearization_exactness() -> Outcome {
    let opts = solve_opts();
    for (a_val, b_val) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        let mut m = MilpModel::new("mccormick");
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let z = mccormick_binary_product(&mut m, a, b).unwrap();
        m.fix(a, a_val).unwrap();
        m.fix(b, b_val).unwrap();
        for sense in [ObjectiveSense::Minimize, ObjectiveSense::Maximize] {
            m.set_objective(sense, [(z, 1.0)]).unwrap();
            let out = solve(&m, &opts).unwrap();
            let got = out.value(z).ok_or("McCormick model not optimal")?;
            ensure!((got - a_val * b_val).abs() < 1e-9, "a={a_val} b={b_val} {sense:?}: z={got}");
        }
    }

    let s_cap = 2.5;
    let mut m = MilpModel::new("polygon");
    let p = m.add_continuous("P", f64::NEG_INFINITY, f64::INFINITY).unwrap();
    let q = m.add_continuous("Q", f64::NEG_INFINITY, f64::INFINITY).unwrap();
    let g = m.add_binary("g");
    polygonal_capacity_cuts(&mut m, p, q, s_cap, g, 12).unwrap();
    m.fix(g, 1.0).unwrap();
    let point = |x: f64, y: f64| {
        let mut v = vec![0.0; 3];
        v[p.index()] = x;
        v[q.index()] = y;
        v[g.index()] = 1.0;
        v
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let r = s_cap * rng.random::<f64>().sqrt();
        let t = rng.random_range(0.0..2.0 * PI);
        let v = point(r * t.cos(), r * t.sin());
        ensure!(m.max_violation(&v) <= 1e-12, "disc point ({:.4}, {:.4}) cut off", v[0], v[1]);
    }
    let bound = 1.0 / (PI / 12.0).cos() - 1.0;
    let reach = s_cap / (PI / 12.0).cos();
    let mut sampled_max: f64 = 0.0;
    let mut kept = 0;
    for _ in 0..100_000 {
        let (x, y) = (rng.random_range(-reach..=reach), rng.random_range(-reach..=reach));
        if m.max_violation(&point(x, y)) <= 0.0 {
            kept += 1;
            sampled_max = sampled_max.max(x.hypot(y) / s_cap - 1.0);
        }
    }
    ensure!(sampled_max <= bound + 1e-12, "sampled over-approximation {sampled_max:.5} exceeds {bound:.5}");
    // The worst case sits on a polygon vertex, halfway between two tangents.
    m.set_objective(ObjectiveSense::Maximize, [(p, (PI / 12.0).cos()), (q, (PI / 12.0).sin())]).unwrap();
    let out = solve(&m, &opts).unwrap();
    let values = out.values.ok_or("vertex LP not optimal")?;
    let vertex = values[p.index()].hypot(values[q.index()]) / s_cap - 1.0;
    ensure!((vertex - bound).abs() < 1e-9, "vertex over-approximation {vertex:.6}, expected {bound:.6}");
    Ok(format!(
        "McCormick exact on 4 assignments; 1000 disc points feasible; over-approximation sampled {:.2}% over {kept} points, vertex {:.2}% <= {:.2}%",
        sampled_max * 100.0,
        vertex * 100.0,
        bound * 100.0
    ))
}

/// Independent re-check of a solution against the network data.
fn verify(net: &Network, sol: &RestorationSolution) -> Result<(), String> {
    let base = net.base_kva();
    let merged = merge_substations(net).map_err(|e| e.to_string())?;
    let closed: Vec<bool> = (0..net.branch_count())
        .map(|k| {
            let id = net.branch(k).id;
            sol.branches.iter().find(|b| b.id == id).map(|b| b.closed).unwrap_or(false)
        })
        .collect();

    let mut sel = EdgeSelection::actual(vec![false; merged.topology().branch_count()]);
    for k in (0..closed.len()).filter(|&k| closed[k]) {
        let t = merged.topology_branch(k).ok_or(format!("substation tie {} closed", net.branch(k).id.0))?;
        sel.set(t, true);
    }
    ensure!(
        is_spanning_forest(merged.topology(), &sel).map_err(|e| e.to_string())?,
        "closed branches are not a forest of the merged topology"
    );
    ensure!(acyclic(net, &closed), "closed branches contain a cycle");
    let mut uf = UnionFind::new(net.node_count());
    for k in (0..closed.len()).filter(|&k| closed[k]) {
        let (a, b) = net.ends(k);
        uf.union(a, b);
    }
    let mut subs_per_root = std::collections::HashMap::new();
    for s in net.substations() {
        *subs_per_root.entry(uf.find(s)).or_insert(0) += 1;
    }
    ensure!(subs_per_root.values().all(|&c| c <= 1), "a component holds two substations");

    let mut p_res = vec![0.0; net.node_count()];
    let mut q_res = vec![0.0; net.node_count()];
    let mut v = vec![0.0; net.node_count()];
    for ns in &sol.nodes {
        let i = net.node_index(ns.id).ok_or("unknown node in solution")?;
        let rec = net.node(i);
        let served = if ns.picked_up { 1.0 } else { 0.0 };
        p_res[i] += ns.pg_kw - served * rec.p_demand;
        q_res[i] += ns.qg_kvar - served * rec.q_demand;
        v[i] = ns.v_sq;
        ensure!(
            ns.v_sq >= rec.v_min - 1e-6 && ns.v_sq <= rec.v_max + 1e-6,
            "node {} voltage {} outside [{}, {}]",
            ns.id.0,
            ns.v_sq,
            rec.v_min,
            rec.v_max
        );
        if rec.kind != NodeKind::Substation && rec.kind != NodeKind::Dg {
            ensure!(ns.pg_kw == 0.0 && ns.qg_kvar == 0.0, "generation at non-source node {}", ns.id.0);
        }
    }
    for bs in &sol.branches {
        let k = net.branch_index(bs.id).ok_or("unknown branch in solution")?;
        let (a, b) = net.ends(k);
        p_res[a] -= bs.p_kw;
        p_res[b] += bs.p_kw;
        q_res[a] -= bs.q_kvar;
        q_res[b] += bs.q_kvar;
        let rec = net.branch(k);
        if bs.closed {
            let drop = v[a] - v[b] - 2.0 * (rec.r * bs.p_kw + rec.x * bs.q_kvar) / base;
            ensure!(drop.abs() < 1e-6, "branch {} voltage drop residual {drop:.2e}", bs.id.0);
        } else {
            ensure!(
                bs.p_kw.abs() / base < 1e-6 && bs.q_kvar.abs() / base < 1e-6,
                "open branch {} carries flow",
                bs.id.0
            );
        }
    }
    for i in 0..net.node_count() {
        ensure!(
            p_res[i].abs() / base < 1e-6 && q_res[i].abs() / base < 1e-6,
            "node {} balance residual ({:.2e}, {:.2e}) pu",
            net.node(i).id.0,
            p_res[i] / base,
            q_res[i] / base
        );
    }
    Ok(())
}

fn solution_verification() -> Outcome {
    let net = ieee33();
    let result = batch();
    let mut checked = 0;
    for (row, sol) in result.rows.iter().zip(&result.solutions) {
        let what = format!("scenario {} {}/{}", row.scenario, row.variant, row.radiality);
        ensure!(
            matches!(row.status, RowStatus::Optimal | RowStatus::Infeasible),
            "{what}: status {:?} {}",
            row.status,
            row.error.as_deref().unwrap_or("")
        );
        match (row.status, sol) {
            (RowStatus::Optimal, Some(sol)) => {
                verify(&net, sol).map_err(|e| format!("{what}: {e}"))?;
                checked += 1;
            }
            (RowStatus::Optimal, None) => return Err(format!("{what}: optimal row without a solution")),
            _ => ensure!(sol.is_none(), "{what}: infeasible row carries a solution"),
        }
    }
    Ok(format!("{checked} optimal solutions verified, {} rows without errors", result.rows.len()))
}
