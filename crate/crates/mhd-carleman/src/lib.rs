//! Numerical laboratory for Carleman-weighted estimates on a linearized
//! incompressible MHD system, and for the associated inverse source problem.
//!
//! The crate is organized around five layers:
//!
//! * [`geometry`] — axis-aligned box domains, staggered-grid metadata,
//!   boundary face decomposition, and superlevel-set masks in space and
//!   space-time.
//! * [`weights`] — the generator function `d`, temporal profile `l`,
//!   singular weight `e^{2 s alpha}`, regular weight `e^{2 s phi}`, and the
//!   C^2 cut-offs built on top of them.
//! * [`solver`] — a MAC staggered-grid IMEX solver for the linearized MHD
//!   system with pressure projection, plus boundary-trace extraction.
//! * [`carleman`] — the weighted functionals, right-hand-side budgets,
//!   ratio sweeps over the large parameter `s`, and the scalar elliptic /
//!   parabolic inequality checks.
//! * [`inverse`] — forward/adjoint observation operators, Tikhonov least
//!   squares reconstruction of the spatial source factor, and the Lipschitz
//!   and Hoelder stability experiments.
//!
//! Everything is deterministic: reductions use a fixed summation tree, and
//! random ensembles are seeded. See the `examples/` directory for runnable
//! entry points and `src/bin/mhdlab.rs` for the batch runner.

pub mod artifacts;
pub mod carleman;
pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod inverse;
pub mod manufactured;
pub mod reduce;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
