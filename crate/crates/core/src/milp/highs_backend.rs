use std::time::Instant;

use highs::{ColProblem, HighsModelStatus, HighsOptionValue, HighsSolutionStatus, Row, Sense, SolvedModel};

use super::{ConstraintSense, MilpModel, ObjectiveSense, SolveError, SolveOptions, SolveOutcome, SolveStatus, SolverBackend, VarKind};

/// HiGHS branch-and-cut through the `highs` bindings.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

impl SolverBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<SolveOutcome, SolveError> {
        let start = Instant::now();
        let mut solved = run(model, opts, true)?;
        if solved.status() == HighsModelStatus::UnboundedOrInfeasible {
            // presolve could not tell the two apart
            log::debug!("retrying {} without presolve", model.name());
            solved = run(model, opts, false)?;
        }
        let nodes = node_count(&solved);
        let status = match solved.status() {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit
            | HighsModelStatus::ObjectiveBound
            | HighsModelStatus::ObjectiveTarget => SolveStatus::Limit,
            other => return Err(SolveError::Backend(format!("HiGHS ended with {other:?}"))),
        };
        let point = || solved.get_solution().columns().to_vec();
        let (values, incumbent) = match status {
            SolveStatus::Optimal => (Some(point()), None),
            SolveStatus::Limit if solved.primal_solution_status() == HighsSolutionStatus::Feasible => {
                (None, Some(point()))
            }
            _ => (None, None),
        };
        let objective = values.as_ref().map(|_| solved.objective_value());
        Ok(SolveOutcome {
            status,
            objective,
            values,
            incumbent,
            nodes,
            wall: start.elapsed(),
        })
    }
}

fn run(model: &MilpModel, opts: &SolveOptions, presolve: bool) -> Result<SolvedModel, SolveError> {
    let mut problem = ColProblem::default();
    let rows: Vec<Row> = model
        .constraints()
        .iter()
        .map(|c| match c.sense {
            ConstraintSense::Le => problem.add_row(..=c.rhs),
            ConstraintSense::Ge => problem.add_row(c.rhs..),
            ConstraintSense::Eq => problem.add_row(c.rhs..=c.rhs),
        })
        .collect();
    let mut columns: Vec<Vec<(Row, f64)>> = vec![Vec::new(); model.num_vars()];
    for (c, &row) in model.constraints().iter().zip(&rows) {
        for &(v, a) in &c.terms {
            columns[v.index()].push((row, a));
        }
    }
    let mut cost = vec![0.0; model.num_vars()];
    for &(v, c) in model.objective() {
        cost[v.index()] += c;
    }
    for ((var, factors), c) in model.variables().iter().zip(&columns).zip(cost) {
        let integer = var.kind == VarKind::Binary;
        problem.add_column_with_integrality(c, var.lower..=var.upper, factors, integer);
    }
    let sense = match model.sense() {
        ObjectiveSense::Maximize => Sense::Maximise,
        ObjectiveSense::Minimize => Sense::Minimise,
    };
    let mut highs = problem
        .try_optimise(sense)
        .map_err(|s| SolveError::Backend(format!("model rejected: {s:?}")))?;
    highs.make_quiet();
    set_option(&mut highs, "mip_rel_gap", opts.rel_gap)?;
    set_option(&mut highs, "mip_feasibility_tolerance", opts.integrality_tol)?;
    set_option(&mut highs, "random_seed", opts.seed as i32)?;
    set_option(&mut highs, "threads", opts.threads.max(1) as i32)?;
    if let Some(limit) = opts.time_limit {
        set_option(&mut highs, "time_limit", limit)?;
    }
    if !presolve {
        set_option(&mut highs, "presolve", "off")?;
    }
    highs
        .try_solve()
        .map_err(|s| SolveError::Backend(format!("solve failed: {s:?}")))
}

fn set_option<V: HighsOptionValue>(
    highs: &mut highs::Model,
    key: &str,
    value: V,
) -> Result<(), SolveError> {
    highs
        .try_set_option(key, value)
        .map_err(|e| SolveError::Backend(format!("option {key}: {e:?}")))
}

fn node_count(solved: &SolvedModel) -> Option<u64> {
    let mut value: i64 = -1;
    // SAFETY: the pointer comes from a live SolvedModel and the key is a
    // NUL-terminated int64 info name.
    let status = unsafe {
        highs_sys::Highs_getInt64InfoValue(solved.as_ptr(), c"mip_node_count".as_ptr(), &mut value)
    };
    if status == highs_sys::STATUS_OK && value >= 0 {
        Some(value as u64)
    } else {
        None
    }
}
