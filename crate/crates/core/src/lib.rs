//! Heteroclinic stationary solutions (monotone and multi-hump antikinks) of
//! the driven fourth-order (CCH) and sixth-order (HCCH) Cahn–Hilliard
//! equations.
//!
//! * [`systems`]: the stationary problems as first-order systems, equilibria,
//!   linearisation and the reversibility operator.
//! * [`integrate`]: adaptive Dormand–Prince 5(4) integration with dense output
//!   and event location.
//! * [`shoot`]: shooting along the unstable manifold, the symmetric-section
//!   distance function, bisection and branch tracing.
//! * [`bvp`]: collocation solver for the half-domain symmetric and the
//!   full projected boundary-value formulations, plus continuation.
//! * [`asymptotics`]: closed-form small-`delta` predictions and Lambert W.
//! * [`analysis`]: zero-crossing measurements, least-squares laws and
//!   comparison reports.
//! * [`io`]: the CSV/JSON file formats.

pub mod analysis;
pub mod asymptotics;
pub mod banded;
pub mod bvp;
mod colloc;
pub mod integrate;
pub mod io;
pub mod poly;
pub mod profile;
pub mod rootfind;
pub mod shoot;
pub mod systems;

pub use systems::{EquilibriumSign, Model, ModelKind, ModelParams, PhaseVector};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
