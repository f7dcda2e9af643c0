//! Solver for the pseudo-parabolic Kobayashi–Warren–Carter system of
//! grain-boundary motion, discretized implicitly in time with a
//! `γ_ε`-regularized singular diffusion.
//!
//! Modules, bottom-up:
//! - [`grid`]: cell-centered grids and the adjoint-consistent `grad`/`div` pair
//! - [`model`]: material functions, truncation, free energies
//! - [`solvers`]: the convex θ- and η-step solves
//! - [`stepper`]: the time march and its energy ledger
//! - [`verification`]: experiments on dissipation, bounds and dependence on data
//! - [`config`], [`io`]: run configuration and file formats

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod solvers;
pub mod stepper;
pub mod verification;

pub use error::{KwcError, Result};
pub use grid::{FaceField, Grid, ScalarField};
pub use model::{default_model, ModelFns, ModelSpec, SchemeParams};
pub use stepper::{run, step, ForcingSequence, Run, Trajectory, TrajectoryState};
