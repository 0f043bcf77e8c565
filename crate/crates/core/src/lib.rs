//! Training single-hidden-layer regression networks by iterated
//! linear-system solves.
//!
//! The training scheme never backpropagates. Each epoch it
//!
//! 1. fits the hidden-to-output coefficients by linear least squares on the
//!    hidden-layer features ([`linsys::build_output_system`]),
//! 2. assembles a first-order increment system whose unknowns are small
//!    changes to *all* parameters ([`linsys::build_increment_system`]),
//! 3. solves it approximately with a projection-sweep solver
//!    ([`solver::solve_projection`]), keeps only the first-layer increments,
//! 4. picks a step length along that direction with a logarithmic line
//!    search that re-fits the output layer at every candidate
//!    ([`line_search::line_search`]), and
//! 5. adopts the best candidate, recording one [`trainer::EpochRecord`].
//!
//! Modules:
//!
//! - [`mlp`] — network parameters, activation primitives, batched forward.
//! - [`dataset`] — benchmark generator, CSV codec, range normalization.
//! - [`linsys`] — assembly of the two least-squares systems and residuals.
//! - [`solver`] — projection-sweep least-squares solver plus a dense
//!   factorization-based reference oracle.
//! - [`line_search`] — logarithmic step sampling, candidate evaluation,
//!   bisection refinement.
//! - [`trainer`] — the epoch loop, stopping logic, curve emission,
//!   evaluation in raw units.
//! - [`model_file`] / [`run_config`] — persistence for trained models and
//!   the TOML run configuration consumed by the CLI.

pub mod dataset;
pub mod error;
pub mod line_search;
pub mod linsys;
pub mod mlp;
pub mod model_file;
pub mod run_config;
pub mod solver;
pub mod trainer;

pub use error::{Error, Result};
