//! Solver-agnostic mixed-integer linear models.
//!
//! [`MilpModel`] is a plain container: variables with bounds and a kind,
//! sparse linear constraints, and a sparse objective. Nothing here knows
//! about a particular solver; [`solve`] dispatches to a [`SolverBackend`]
//! chosen by name.

mod highs_backend;
mod linearize;
mod lp_format;
mod solve;

pub use highs_backend::HighsBackend;
pub use linearize::{mccormick_binary_product, polygonal_capacity_cuts, DEFAULT_POLYGON_SEGMENTS};
pub use solve::{
    backend_for, solve, SolveError, SolveOptions, SolveOutcome, SolveStatus, SolverBackend,
    DEFAULT_BACKEND,
};

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

static NEXT_MODEL_TAG: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstrId(usize);

impl ConstrId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    #[serde(with = "extended_real")]
    pub lower: f64,
    #[serde(with = "extended_real")]
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violates the constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            ConstraintSense::Le => (lhs - self.rhs).max(0.0),
            ConstraintSense::Ge => (self.rhs - lhs).max(0.0),
            ConstraintSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSense {
    Maximize,
    Minimize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{context} references variable {index}, but the model has {count} variables")]
    UnknownVariable { context: String, index: usize, count: usize },
    #[error("variable {name}: bounds [{lower}, {upper}] are invalid for a {kind:?} variable")]
    InvalidBounds { name: String, kind: VarKind, lower: f64, upper: f64 },
    #[error("{context} has a non-finite coefficient or right-hand side")]
    NonFinite { context: String },
    #[error("variable {0} must be binary")]
    NotBinary(String),
    #[error("polygonal approximation needs an even segment count of at least 4, got {0}")]
    Segments(u32),
    #[error("capacity must be positive and finite, got {0}")]
    Capacity(f64),
}

/// Variables, linear constraints and a linear objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    name: String,
    tag: u64,
    variables: Vec<Variable>,
    constraints: Vec<LinearConstraint>,
    objective: Vec<(VarId, f64)>,
    sense: ObjectiveSense,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel {
            name: name.into(),
            tag: NEXT_MODEL_TAG.fetch_add(1, Ordering::Relaxed),
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            sense: ObjectiveSense::Maximize,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Identifies the model a set of variable handles was created for. Clones
    /// and relaxations keep the tag since they keep the variable layout.
    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        let bad = lower.is_nan()
            || upper.is_nan()
            || lower > upper
            || lower == f64::INFINITY
            || upper == f64::NEG_INFINITY
            || (kind == VarKind::Binary && (lower < 0.0 || upper > 1.0));
        if bad {
            return Err(ModelError::InvalidBounds { name, kind, lower, upper });
        }
        self.variables.push(Variable { name, kind, lower, upper });
        Ok(VarId(self.variables.len() - 1))
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
            .expect("[0, 1] is a valid binary box")
    }

    pub fn add_continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    /// Adds `Σ coef·var (sense) rhs`. Repeated variables are merged.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: ConstraintSense,
        rhs: f64,
    ) -> Result<ConstrId, ModelError> {
        let name = name.into();
        let terms = self.normalize_terms(&name, terms)?;
        if !rhs.is_finite() {
            return Err(ModelError::NonFinite { context: name });
        }
        self.constraints.push(LinearConstraint { name, terms, sense, rhs });
        Ok(ConstrId(self.constraints.len() - 1))
    }

    pub fn set_objective(
        &mut self,
        sense: ObjectiveSense,
        terms: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<(), ModelError> {
        self.objective = self.normalize_terms("objective", terms)?;
        self.sense = sense;
        Ok(())
    }

    fn normalize_terms(
        &self,
        context: &str,
        terms: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<Vec<(VarId, f64)>, ModelError> {
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (var, coef) in terms {
            self.check_var(context, var)?;
            if !coef.is_finite() {
                return Err(ModelError::NonFinite { context: context.to_string() });
            }
            match merged.iter_mut().find(|(v, _)| *v == var) {
                Some((_, c)) => *c += coef,
                None => merged.push((var, coef)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        Ok(merged)
    }

    fn check_var(&self, context: &str, var: VarId) -> Result<(), ModelError> {
        if var.0 >= self.variables.len() {
            return Err(ModelError::UnknownVariable {
                context: context.to_string(),
                index: var.0,
                count: self.variables.len(),
            });
        }
        Ok(())
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) -> Result<(), ModelError> {
        self.check_var("bounds", var)?;
        let v = &self.variables[var.0];
        if lower.is_nan()
            || upper.is_nan()
            || lower > upper
            || (v.kind == VarKind::Binary && (lower < 0.0 || upper > 1.0))
        {
            return Err(ModelError::InvalidBounds {
                name: v.name.clone(),
                kind: v.kind,
                lower,
                upper,
            });
        }
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
        Ok(())
    }

    /// Pins a variable to a single value through its bounds.
    pub fn fix(&mut self, var: VarId, value: f64) -> Result<(), ModelError> {
        self.set_bounds(var, value, value)
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn constraint(&self, id: ConstrId) -> &LinearConstraint {
        &self.constraints[id.0]
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn sense(&self) -> ObjectiveSense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Copy of the model with every binary variable made continuous on its
    /// bounds (a subset of `[0, 1]`).
    pub fn lp_relaxation(&self) -> MilpModel {
        let mut relaxed = self.clone();
        for v in &mut relaxed.variables {
            v.kind = VarKind::Continuous;
        }
        relaxed
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Largest bound or constraint violation of a point; integrality is
    /// checked separately.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        let rows = self.constraints.iter().map(|c| c.violation(values));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Model in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        lp_format::write(self)
    }
}

/// Serde helper for bounds: finite values are numbers, infinities are the
/// strings `"inf"` / `"-inf"` (JSON has no infinity literal).
mod extended_real {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            Repr::Number(*value).serialize(s)
        } else if *value > 0.0 {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Text("-inf".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(D::Error::custom(format!("invalid bound {t:?}"))),
        }
    }
}
