use super::{conjugate_gradient, ConvexObjective, SolveReport};
use crate::error::{KwcError, Result};
use crate::grid::{inner_h_unchecked, norm_h, ScalarField};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const CG_REL_TOL: f64 = 1e-10;

/// Damped Newton iteration for a smooth convex objective. Each step solves
/// the Hessian system by preconditioned CG and backtracks (halving) until
/// the Armijo condition holds. Stops when the H-norm of the gradient is at
/// most `tol`.
pub fn newton_minimize(
    obj: &dyn ConvexObjective,
    init: &ScalarField,
    tol: f64,
    max_iters: usize,
) -> Result<(ScalarField, SolveReport)> {
    let mut z = init.clone();
    let mut f = obj.value(&z);
    if !f.is_finite() {
        return Err(KwcError::Numerical("objective at Newton start".into()));
    }
    let f_start = f;
    let mut report = SolveReport::default();
    let cg_cap = 20 * z.len() + 100;
    loop {
        let g = obj.gradient(&z);
        let res = norm_h(&g);
        report.final_residual_norm = res;
        report.objective_decrease = f_start - f;
        if !res.is_finite() {
            return Err(KwcError::Numerical(
                "gradient during Newton iteration".into(),
            ));
        }
        if res <= tol {
            return Ok((z, report));
        }
        if report.iterations >= max_iters {
            return Err(KwcError::SolverFailure {
                stage: "newton",
                message: format!("no convergence within {max_iters} iterations"),
                report,
            });
        }
        report.iterations += 1;

        let diag = obj.hessian_diagonal(&z);
        let (mut step, _) = conjugate_gradient(
            |d| obj.hessian_apply(&z, d),
            &diag,
            &g.scale(-1.0),
            CG_REL_TOL,
            cg_cap,
        );
        let mut slope = inner_h_unchecked(&g, &step);
        if !(slope < 0.0) {
            step = g.scale(-1.0);
            slope = -res * res;
        }
        // round-off allowance: near the minimizer the decrease drops below
        // the resolution of f itself
        let slack = 16.0 * f64::EPSILON * (1.0 + f.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_BACKTRACKS {
            let mut trial = z.clone();
            trial.axpy(t, &step);
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO * t * slope + slack {
                z = trial;
                f = ft.min(f);
                accepted = true;
                break;
            }
            t *= 0.5;
            report.line_search_backtracks += 1;
        }
        if !accepted {
            return Err(KwcError::SolverFailure {
                stage: "newton",
                message: "line search failed to find a decrease".into(),
                report,
            });
        }
    }
}
