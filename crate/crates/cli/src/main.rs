use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridforest::formation::{
    build_mg_formation, dg_utilization, extract_solution, restored_load, ModelVariant, VariantKind,
};
use gridforest::graph::{count_spanning_trees, enumerate_spanning_forests, enumerate_spanning_trees, Network};
use gridforest::harness::{
    compare_nodes, format_comparison, format_summary, nesting_violations, objective_mismatches, run_batch,
    summarize, BatchConfig, Tag,
};
use gridforest::io::{self as gio, BatchRow};
use gridforest::milp::{solve, SolveOptions, SolveStatus};
use gridforest::radiality::{lp_integrality_trials, merge_substations, Formulation};
use gridforest::scenario::{generate_scenario, FaultCounts, FaultScenario, DEFAULT_OPEN_PROB};

/// Radial reconfiguration and microgrid formation for distribution networks.
#[derive(Parser)]
#[command(name = "gridforest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct NetArg {
    /// Network JSON file; the shipped 33-node feeder when omitted.
    #[arg(long)]
    net: Option<PathBuf>,
}

impl NetArg {
    fn load(&self) -> Result<Network> {
        match &self.net {
            Some(path) => gio::load_network(path).with_context(|| format!("loading {}", path.display())),
            None => Ok(gio::ieee33()),
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Time limit per solve, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Relative MIP gap.
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    /// Solver random seed.
    #[arg(long, default_value_t = 0)]
    solver_seed: u32,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            time_limit: self.time_limit,
            rel_gap: self.gap,
            seed: self.solver_seed,
            ..SolveOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one restoration problem and print the solution as JSON.
    Solve {
        #[command(flatten)]
        net: NetArg,
        /// Fault scenario JSON; no faults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "proposed")]
        variant: VariantKind,
        #[arg(long, default_value = "dmcf")]
        radiality: Formulation,
        /// Write the solution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the model in CPLEX LP format.
        #[arg(long)]
        lp: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve random fault scenarios under several model variants.
    Batch {
        #[command(flatten)]
        net: NetArg,
        /// Number of scenarios.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Master seed for scenario generation.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "proposed,fixed_islands,radial_baseline")]
        variants: Vec<VariantKind>,
        /// Radiality formulations for the proposed variant.
        #[arg(long, value_delimiter = ',', default_value = "scf,dmcf")]
        radiality: Vec<Formulation>,
        /// Probability that a drawn fault is stuck open.
        #[arg(long, default_value_t = DEFAULT_OPEN_PROB)]
        open_prob: f64,
        /// Concurrent solves; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Result table.
        #[arg(long, default_value = "batch.csv")]
        out: PathBuf,
        /// Batch settings and scenarios as JSON.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Enumerate spanning trees or forests, or count trees by the matrix-tree theorem.
    Oracle {
        #[arg(value_enum)]
        what: OracleKind,
        #[command(flatten)]
        net: NetArg,
    },
    /// Check how close the radiality LP relaxation is to integral under random objectives.
    LpTest {
        #[command(flatten)]
        net: NetArg,
        #[arg(long, default_value = "dmcf")]
        radiality: Formulation,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Put the objective on the switch status instead of the spanning tree.
        #[arg(long)]
        coupled: bool,
    },
    /// Summary tables for a batch result file.
    Summarize {
        #[arg(long)]
        csv: PathBuf,
        /// Tags to compare by explored nodes and objective, e.g. proposed/scf.
        #[arg(long, num_args = 2, value_names = ["A", "B"], default_values = ["proposed/scf", "proposed/dmcf"])]
        compare: Vec<Tag>,
        /// Relative tolerance for objective comparisons.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Generate one fault scenario as JSON.
    Scenario {
        #[command(flatten)]
        net: NetArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        branch_faults: usize,
        #[arg(long, default_value_t = 0)]
        load_faults: usize,
        #[arg(long, default_value_t = DEFAULT_OPEN_PROB)]
        open_prob: f64,
    },
    /// Print an embedded JSON schema.
    Schema {
        #[arg(value_enum)]
        which: SchemaKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Trees,
    Forests,
    Count,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaKind {
    Network,
    Scenario,
    Solution,
    Batch,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_solve(
    net: &Network,
    scenario: &FaultScenario,
    variant: ModelVariant,
    out: Option<&Path>,
    lp: Option<&Path>,
    opts: &SolveOptions,
) -> Result<ExitCode> {
    let (model, handles) = build_mg_formation(net, scenario, &variant)?;
    log::info!(
        "{} variables ({} binary), {} constraints",
        model.num_vars(),
        model.num_binaries(),
        model.num_constraints()
    );
    if let Some(p) = lp {
        fs::write(p, model.to_lp_format()).with_context(|| format!("writing {}", p.display()))?;
    }
    let outcome = solve(&model, opts)?;
    log::info!("status {:?}, nodes {:?}, {:?}", outcome.status, outcome.nodes, outcome.wall);
    match outcome.status {
        SolveStatus::Optimal => {
            let sol = extract_solution(&outcome, &handles)?;
            eprintln!(
                "restored {:.1} kW, {} components ({} energized), DG utilization {}",
                restored_load(&sol),
                sol.component_count(),
                sol.microgrid_count(),
                dg_utilization(&sol).map_or_else(|| "n/a".into(), |u| format!("{:.4}", u)),
            );
            write_output(out, &(serde_json::to_string_pretty(&sol)? + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        SolveStatus::Infeasible => {
            eprintln!("infeasible");
            Ok(ExitCode::from(2))
        }
        other => bail!("solve ended with status {other:?}"),
    }
}

fn cmd_oracle(net: &Network, what: OracleKind) -> Result<()> {
    let ids = |bits: &[bool]| -> String {
        let chosen: Vec<String> =
            bits.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| net.branch(k).id.to_string()).collect();
        format!("[{}]", chosen.join(","))
    };
    match what {
        OracleKind::Count => println!("{}", count_spanning_trees(net)?),
        OracleKind::Trees => {
            for t in enumerate_spanning_trees(net)? {
                println!("{}", ids(t.bits()));
            }
        }
        OracleKind::Forests => {
            for f in enumerate_spanning_forests(net)? {
                println!("{}", ids(f.bits()));
            }
        }
    }
    Ok(())
}

fn cmd_summarize(csv: &Path, compare: &[Tag], tol: f64) -> Result<()> {
    let rows = BatchRow::load_all(csv)?;
    print!("{}", format_summary(&summarize(&rows)));
    let (a, b) = (compare[0], compare[1]);
    println!();
    print!("{}", format_comparison(&compare_nodes(&rows, a, b)));
    let mismatches = objective_mismatches(&rows, a, b, tol);
    println!("objective mismatches between {a} and {b}: {}", mismatches.len());
    for m in &mismatches {
        println!("  scenario {}: {} vs {}", m.scenario, m.a, m.b);
    }
    let tags: Vec<Tag> = summarize(&rows).iter().map(|g| g.tag).collect();
    let find = |v: VariantKind| tags.iter().copied().filter(move |t| t.variant == v);
    let mut violations = Vec::new();
    for outer in find(VariantKind::Proposed) {
        for inner in find(VariantKind::FixedIslands) {
            violations.extend(nesting_violations(&rows, outer, inner, tol));
        }
    }
    for outer in find(VariantKind::FixedIslands) {
        for inner in find(VariantKind::RadialBaseline) {
            violations.extend(nesting_violations(&rows, outer, inner, tol));
        }
    }
    println!("nesting violations: {}", violations.len());
    for v in &violations {
        println!("  scenario {}: {}", v.scenario, v.reason);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { net, scenario, variant, radiality, out, lp, solver } => {
            let network = net.load()?;
            let scenario = match scenario {
                Some(p) => gio::load_scenario(&p).with_context(|| format!("loading {}", p.display()))?,
                None => FaultScenario::empty("no-faults"),
            };
            cmd_solve(
                &network,
                &scenario,
                ModelVariant::new(variant, radiality),
                out.as_deref(),
                lp.as_deref(),
                &solver.options(),
            )
        }
        Command::Batch { net, n, seed, variants, radiality, open_prob, workers, out, meta, solver } => {
            let network = net.load()?;
            let config = BatchConfig {
                scenarios: n,
                seed,
                open_prob,
                variants,
                radiality,
                solve: solver.options(),
                workers,
            };
            let result = run_batch(&network, &config)?;
            BatchRow::save_all(&out, &result.rows)?;
            if let Some(p) = meta {
                let doc = serde_json::json!({ "metadata": result.metadata, "scenarios": result.scenarios });
                gio::save_json(&p, &doc)?;
            }
            print!("{}", format_summary(&summarize(&result.rows)));
            eprintln!("wrote {} rows to {}", result.rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { what, net } => {
            cmd_oracle(&net.load()?, what)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::LpTest { net, radiality, trials, seed, coupled } => {
            let network = net.load()?;
            let merged = merge_substations(&network)?;
            let report = lp_integrality_trials(
                merged.topology(),
                merged.root(),
                radiality,
                coupled,
                trials,
                seed,
                &SolveOptions::default(),
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { csv, compare, tol } => {
            cmd_summarize(&csv, &compare, tol)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario { net, seed, branch_faults, load_faults, open_prob } => {
            let network = net.load()?;
            let counts = FaultCounts { branch_faults, load_switch_faults: load_faults };
            let s = generate_scenario(&network, seed, counts, open_prob)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Schema { which } => {
            print!(
                "{}",
                match which {
                    SchemaKind::Network => gio::NETWORK_SCHEMA,
                    SchemaKind::Scenario => gio::SCENARIO_SCHEMA,
                    SchemaKind::Solution => gio::SOLUTION_SCHEMA,
                    SchemaKind::Batch => gio::BATCH_SCHEMA,
                }
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
