//! Radial reconfiguration and microgrid formation for distribution networks.
//!
//! - [`graph`]: network model, spanning tree/forest checks and enumeration.
//! - [`milp`]: solver-agnostic MILP models, linearizations and the HiGHS backend.
//! - [`radiality`]: spanning tree flow formulations and the forest coupling.
//! - [`formation`]: the restoration model, its baselines and solution checks.
//! - [`scenario`]: fault scenarios and their seeded generation.
//! - [`io`]: network, scenario and solution files, batch tables.
//! - [`harness`]: batch runs and summary statistics.

pub mod formation;
pub mod graph;
pub mod harness;
pub mod io;
pub mod milp;
pub mod radiality;
pub mod scenario;
