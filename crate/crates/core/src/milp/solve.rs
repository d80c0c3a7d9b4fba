use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HighsBackend, MilpModel, VarId, VarKind};

pub const DEFAULT_BACKEND: &str = "highs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Largest distance from {0, 1} accepted for a binary value.
    pub integrality_tol: f64,
    pub rel_gap: f64,
    /// Seconds; `None` means no limit.
    pub time_limit: Option<f64>,
    pub seed: u32,
    /// Solver threads per solve.
    pub threads: u32,
    pub backend: String,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            integrality_tol: 1e-6,
            rel_gap: 0.0,
            time_limit: None,
            seed: 0,
            threads: 1,
            backend: DEFAULT_BACKEND.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped by a time or other work limit before proving optimality.
    Limit,
}

/// Result of one solve. `values` is present exactly when the status is
/// optimal; a limit stop may carry the best known point in `incumbent`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub incumbent: Option<Vec<f64>>,
    /// Explored branch-and-cut nodes, when the backend reports them.
    pub nodes: Option<u64>,
    pub wall: Duration,
}

impl SolveOutcome {
    pub fn value(&self, var: VarId) -> Option<f64> {
        self.values.as_ref().map(|v| v[var.index()])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no solver backend named {0:?} is available")]
    BackendUnavailable(String),
    #[error("solver backend failed: {0}")]
    Backend(String),
    #[error("binary variable {name} = {value} is not within tolerance of 0 or 1")]
    Integrality { name: String, value: f64 },
}

/// A MILP solver reachable through the solver-agnostic model.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Raw solve; binaries are rounded and checked by [`solve`].
    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<SolveOutcome, SolveError>;
}

pub fn backend_for(key: &str) -> Result<Box<dyn SolverBackend>, SolveError> {
    match key {
        "highs" => Ok(Box::new(HighsBackend)),
        other => Err(SolveError::BackendUnavailable(other.to_string())),
    }
}

/// Solves with the backend named in `opts`, snaps binaries that are within
/// `integrality_tol` of an integer, and recomputes the objective from the
/// snapped point.
pub fn solve(model: &MilpModel, opts: &SolveOptions) -> Result<SolveOutcome, SolveError> {
    let backend = backend_for(&opts.backend)?;
    let mut outcome = backend.solve(model, opts)?;
    if let Some(values) = outcome.values.as_mut() {
        snap_binaries(model, values, opts.integrality_tol)?;
        outcome.objective = Some(model.objective_value(values));
    }
    if let Some(values) = outcome.incumbent.as_mut() {
        snap_binaries(model, values, opts.integrality_tol)?;
    }
    Ok(outcome)
}

fn snap_binaries(model: &MilpModel, values: &mut [f64], tol: f64) -> Result<(), SolveError> {
    for (var, x) in model.variables().iter().zip(values.iter_mut()) {
        if var.kind != VarKind::Binary {
            continue;
        }
        let rounded = x.round();
        if (*x - rounded).abs() > tol {
            return Err(SolveError::Integrality { name: var.name.clone(), value: *x });
        }
        *x = rounded;
    }
    Ok(())
}
