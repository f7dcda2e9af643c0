use super::functionals::{eta_equation_residual, Upsilon, UpsilonStar};
use super::{conjugate_gradient, newton_minimize, ConvexObjective, SolveReport};
use crate::error::{KwcError, Result};
use crate::grid::{
    self, div, forward_cell_gradients, neumann_laplacian, norm_h, norm_v, scatter_forward,
    ScalarField, MAX_DIM,
};
use crate::model::{gamma_eps, ModelFns, SchemeParams};
use crate::stepper::max_stable_tau;

/// θ-step: minimize `Υ_*` with `η̃ = η_{i-1}`, `θ̃₀ = θ_{i-1}`, `ṽ = v_i`.
/// Newton is tried first, lagged diffusivity second.
pub fn solve_theta_step(
    eta_prev: &ScalarField,
    theta_prev: &ScalarField,
    v: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<(ScalarField, SolveReport)> {
    if !(params.tau > 0.0 && params.tau < 1.0) {
        return Err(KwcError::Precondition(format!(
            "time step {} outside (0, 1)",
            params.tau
        )));
    }
    let obj = UpsilonStar::new(eta_prev, theta_prev, v, fns, params)?;
    match newton_minimize(&obj, theta_prev, params.tol_newton, params.max_newton_iters) {
        Ok(out) => Ok(out),
        Err(KwcError::SolverFailure { .. }) => {
            let (theta, mut rep) = kacanov_theta_step(&obj, theta_prev, params)?;
            rep.used_fallback = true;
            Ok((theta, rep))
        }
        Err(e) => Err(e),
    }
}

/// Lagged-diffusivity (Kačanov) iteration for the θ-step: freeze the face
/// coefficient `α̃_M(η)/γ_ε(∇θ^k)` and solve the resulting SPD system.
pub fn kacanov_theta_step(
    obj: &UpsilonStar,
    init: &ScalarField,
    params: &SchemeParams,
) -> Result<(ScalarField, SolveReport)> {
    let grid = *obj.grid();
    let tau = obj.tau();
    let nu2 = obj.nu() * obj.nu();
    let eps = obj.eps();
    let mob = obj.mobility().to_vec();
    let theta0 = obj.theta0();

    // right-hand side does not depend on the iterate
    let mut rhs = ScalarField::from_values(
        &grid,
        theta0
            .values()
            .iter()
            .zip(&mob)
            .map(|(t, w)| w * t / tau)
            .collect(),
    )?;
    rhs.axpy(nu2 / tau, &neumann_laplacian(theta0));
    rhs.axpy(1.0, obj.v());

    let f_start = obj.value(init);
    let mut theta = init.clone();
    let mut report = SolveReport::default();
    let cap = 20 * params.max_newton_iters.max(50);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    loop {
        let res = norm_h(&obj.gradient(&theta));
        report.final_residual_norm = res;
        report.objective_decrease = f_start - obj.value(&theta);
        if !res.is_finite() {
            return Err(KwcError::Numerical("Kačanov iterate".into()));
        }
        if res <= params.tol_newton {
            return Ok((theta, report));
        }
        if res < 0.999 * best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if report.iterations >= cap || since_best > 50 {
            return Err(KwcError::SolverFailure {
                stage: "theta-kacanov",
                message: "lagged-diffusivity iteration stalled".into(),
                report,
            });
        }
        report.iterations += 1;

        let kappa: Vec<f64> = forward_cell_gradients(&grid::grad(&theta))
            .iter()
            .zip(obj.coef())
            .map(|(y, a)| a / gamma_eps(y, eps))
            .collect();
        let apply = |d: &ScalarField| {
            let ys = forward_cell_gradients(&grid::grad(d));
            let flux: Vec<[f64; MAX_DIM]> = ys
                .iter()
                .zip(&kappa)
                .map(|(y, k)| [k * y[0], k * y[1]])
                .collect();
            let mut out = ScalarField::from_values(
                &grid,
                d.values()
                    .iter()
                    .zip(&mob)
                    .map(|(x, w)| w * x / tau)
                    .collect(),
            )
            .expect("same grid");
            out.axpy(-1.0, &div(&scatter_forward(&grid, &flux)));
            out.axpy(nu2 / tau, &neumann_laplacian(d));
            out
        };
        let diag = obj.hessian_diagonal(&theta);
        let (next, _) = conjugate_gradient(apply, &diag, &rhs, 1e-12, 20 * theta.len() + 100);
        theta = next;
    }
}

/// Outcome of the η-step's Picard iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EtaStepReport {
    /// Number of Picard sweeps.
    pub fixed_point_iterations: usize,
    /// Newton work summed over all sweeps; `final_residual_norm` is the
    /// H-norm of the full nonlinear η-equation residual at the result.
    pub newton: SolveReport,
    /// V-norm of successive Picard increments.
    pub increments: Vec<f64>,
}

impl EtaStepReport {
    /// Largest ratio of successive increments, ignoring increments already
    /// at round-off level.
    pub fn contraction_estimate(&self, floor: f64) -> Option<f64> {
        self.increments
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))))
    }
}

/// η-step: Picard iteration `η^{k+1} = argmin Υ(·; η^k)` with `θ̃ = θ_i`,
/// `η̃₀ = η_{i-1}`, `ũ = u_i`, stopped in the V-norm.
pub fn solve_eta_step(
    eta_prev: &ScalarField,
    theta_i: &ScalarField,
    u: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<(ScalarField, EtaStepReport)> {
    let (tau1, _) = max_stable_tau(fns, params.mu);
    if !(params.tau < tau1) {
        return Err(KwcError::Precondition(format!(
            "time step {} violates the contraction bound tau < tau1 = {tau1}",
            params.tau
        )));
    }
    let mut obj = Upsilon::new(eta_prev, eta_prev, theta_i, u, fns, params)?;
    let mut eta = eta_prev.clone();
    let mut report = EtaStepReport::default();
    loop {
        if report.fixed_point_iterations >= params.max_fp_iters {
            let rate = report
                .contraction_estimate(0.0)
                .map_or("n/a".to_string(), |r| format!("{r:.3}"));
            return Err(KwcError::SolverFailure {
                stage: "eta-picard",
                message: format!(
                    "no fixed point within {} sweeps (contraction estimate {rate})",
                    params.max_fp_iters
                ),
                report: report.newton,
            });
        }
        report.fixed_point_iterations += 1;
        obj.relag(&eta);
        let (next, rep) = newton_minimize(&obj, &eta, params.tol_newton, params.max_newton_iters)
            .map_err(|e| match e {
            KwcError::SolverFailure {
                message, report, ..
            } => KwcError::SolverFailure {
                stage: "eta-newton",
                message,
                report,
            },
            other => other,
        })?;
        report.newton.iterations += rep.iterations;
        report.newton.line_search_backtracks += rep.line_search_backtracks;
        report.newton.objective_decrease += rep.objective_decrease;
        let incr = norm_v(&next.sub(&eta));
        report.increments.push(incr);
        eta = next;
        if incr <= params.tol_fixed_point {
            break;
        }
    }
    let residual = norm_h(&eta_equation_residual(
        &eta, eta_prev, theta_i, u, fns, params,
    )?);
    report.newton.final_residual_norm = residual;
    if !(residual <= 10.0 * params.tol_newton) {
        return Err(KwcError::SolverFailure {
            stage: "eta-step",
            message: format!("nonlinear residual {residual:.3e} above 10 * tol_newton"),
            report: report.newton,
        });
    }
    Ok((eta, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::default_model;
    use crate::solvers::theta_equation_residual;

    #[test]
    fn theta_step_keeps_constant_state() {
        let grid = Grid::line(8, 1.0).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = SchemeParams::default();
        let eta = ScalarField::constant(&grid, 0.3);
        let th = ScalarField::constant(&grid, 1.2);
        let (out, rep) = solve_theta_step(&eta, &th, &ScalarField::zeros(&grid), &fns, &p).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(out, th);
    }

    #[test]
    fn kacanov_matches_newton() {
        let grid = Grid::line(12, 1.0).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = SchemeParams {
            tol_newton: 1e-11,
            ..SchemeParams::default()
        };
        let eta = ScalarField::from_fn(&grid, |x| 0.5 + 0.3 * (4.0 * x[0]).sin());
        let th = ScalarField::from_fn(&grid, |x| if x[0] < 0.5 { 0.0 } else { 1.0 });
        let v = ScalarField::from_fn(&grid, |x| x[0] - 0.5);
        let obj = UpsilonStar::new(&eta, &th, &v, &fns, &p).unwrap();
        let (a, _) = newton_minimize(&obj, &th, 1e-11, 50).unwrap();
        let (b, rep) = kacanov_theta_step(&obj, &th, &p).unwrap();
        assert!(rep.iterations > 0);
        assert!(a.sub(&b).max_abs() < 1e-9);
        let r = theta_equation_residual(&b, &eta, &th, &v, &fns, &p).unwrap();
        assert!(norm_h(&r) <= 1e-11);
    }

    #[test]
    fn eta_step_rejects_large_tau() {
        let grid = Grid::line(8, 1.0).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = SchemeParams {
            mu: 0.1,
            tau: 0.2,
            ..SchemeParams::default()
        };
        let z = ScalarField::zeros(&grid);
        let err = solve_eta_step(&z, &z, &z, &fns, &p).unwrap_err();
        assert!(matches!(err, KwcError::Precondition(_)));
    }

    #[test]
    fn eta_step_stationary_constant() {
        let grid = Grid::new(2, &[4, 4], &[1.0, 1.0]).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = SchemeParams::default();
        let c = 0.6;
        let eta = ScalarField::constant(&grid, c);
        let th = ScalarField::constant(&grid, -0.5);
        let s = fns.spec();
        let u = ScalarField::constant(&grid, s.g(c) + s.alpha_prime(c) * p.eps);
        let (out, rep) = solve_eta_step(&eta, &th, &u, &fns, &p).unwrap();
        assert!(out.sub(&eta).max_abs() < 1e-12);
        assert_eq!(rep.fixed_point_iterations, 1);
    }
}
