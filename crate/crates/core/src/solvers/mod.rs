//! Convex sub-solvers for one time step: the θ-step minimizes `Υ_*`, the
//! η-step runs a Picard iteration on the lagged `g` term with a convex
//! minimization of `Υ` inside.

mod cg;
mod functionals;
mod newton;
mod oracle;
mod steps;

pub use cg::{conjugate_gradient, CgOutcome};
pub use functionals::{
    eta_equation_residual, functional_upsilon, functional_upsilon_star, theta_equation_residual,
    Upsilon, UpsilonStar,
};
pub use newton::newton_minimize;
pub use oracle::oracle_minimize_dense;
pub use steps::{kacanov_theta_step, solve_eta_step, solve_theta_step, EtaStepReport};

use crate::grid::{Grid, ScalarField};

/// A smooth convex functional on cell fields. Gradients are Riesz
/// representatives in the cell-volume weighted inner product.
pub trait ConvexObjective {
    fn grid(&self) -> &Grid;

    fn value(&self, z: &ScalarField) -> f64;

    fn gradient(&self, z: &ScalarField) -> ScalarField;

    /// Action of the second derivative at `z` on `direction`.
    fn hessian_apply(&self, z: &ScalarField, direction: &ScalarField) -> ScalarField;

    /// Positive diagonal used to precondition Hessian solves.
    fn hessian_diagonal(&self, _z: &ScalarField) -> ScalarField {
        ScalarField::constant(self.grid(), 1.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub objective_decrease: f64,
    pub line_search_backtracks: usize,
    /// Set when the θ-step had to fall back to lagged diffusivity.
    pub used_fallback: bool,
}
