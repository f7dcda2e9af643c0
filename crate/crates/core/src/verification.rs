//! Experiments that turn the qualitative properties of the scheme into
//! checkable numbers: continuous dependence on data, order preservation of
//! the η-equation, confinement to the truncation window, and self-convergence
//! under τ and ε refinement.

use std::sync::Arc;
use std::thread;

use crate::error::{KwcError, Result};
use crate::grid::{self, norm_face, norm_h, norm_v, ScalarField};
use crate::model::{energy_f_eps, ModelFns, SchemeParams};
use crate::solvers::solve_eta_step;
use crate::stepper::{self, max_stable_tau, ForcingSequence, Run, Trajectory};

pub type ForcingFn = Arc<dyn Fn(f64) -> ScalarField + Send + Sync>;

/// Everything needed to (re)run the scheme at any τ or ε.
#[derive(Clone)]
pub struct Problem {
    pub eta0: ScalarField,
    pub theta0: ScalarField,
    pub u: ForcingFn,
    pub v: ForcingFn,
    pub fns: ModelFns,
    pub params: SchemeParams,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("grid", self.eta0.grid())
            .field("fns", &self.fns)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// Problem without forcing.
    pub fn unforced(
        eta0: ScalarField,
        theta0: ScalarField,
        fns: ModelFns,
        params: SchemeParams,
    ) -> Self {
        let grid = *eta0.grid();
        let zero: ForcingFn = Arc::new(move |_| ScalarField::zeros(&grid));
        Problem {
            eta0,
            theta0,
            u: zero.clone(),
            v: zero,
            fns,
            params,
        }
    }

    pub fn forcing(&self) -> ForcingSequence {
        let grid = *self.eta0.grid();
        ForcingSequence::from_fns(
            &grid,
            self.params.tau,
            self.params.horizon,
            |t| (self.u)(t),
            |t| (self.v)(t),
        )
    }

    pub fn run(&self) -> Result<Run> {
        Ok(stepper::run(
            &self.eta0,
            &self.theta0,
            &self.forcing(),
            &self.fns,
            &self.params,
        )?)
    }

    pub fn with_params(&self, params: SchemeParams) -> Self {
        Problem {
            params,
            ..self.clone()
        }
    }
}

/// Gap functional between two states:
/// `|η¹-η²|_H² + μ²|∇(η¹-η²)|² + |√α₀(η¹)(θ¹-θ²)|_H² + ν²|∇(θ¹-θ²)|²`.
pub fn compute_j(
    eta1: &ScalarField,
    theta1: &ScalarField,
    eta2: &ScalarField,
    theta2: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<f64> {
    let g = eta1.grid();
    for other in [theta1, eta2, theta2] {
        g.check_same(other.grid())?;
    }
    let de = eta1.sub(eta2);
    let dt = theta1.sub(theta2);
    let weighted: f64 = eta1
        .values()
        .iter()
        .zip(dt.values())
        .map(|(&e, d)| fns.spec().alpha0(e) * d * d)
        .sum();
    Ok(norm_h(&de).powi(2)
        + params.mu * params.mu * norm_face(&grid::grad(&de)).powi(2)
        + g.cell_volume() * weighted
        + params.nu * params.nu * norm_face(&grid::grad(&dt)).powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceReport {
    pub times: Vec<f64>,
    pub j_values: Vec<f64>,
    /// `J(0) + |u¹-u²|²_{L²(0,T;H)} + |v¹-v²|²_{L²(0,T;H)}`
    pub data_gap: f64,
    /// `max_t J(t) / data_gap`, with `0/0 = 0`
    pub empirical_ratio: f64,
}

fn run_pair(a: &Problem, b: &Problem) -> Result<(Run, Run)> {
    let (ra, rb) = thread::scope(|s| {
        let ha = s.spawn(|| a.run());
        let hb = s.spawn(|| b.run());
        (
            ha.join().expect("run thread panicked"),
            hb.join().expect("run thread panicked"),
        )
    });
    Ok((ra?, rb?))
}

/// Run base and perturbed problems (same grid, model and scheme constants)
/// and track `J(t_i)`.
pub fn continuous_dependence_experiment(
    base: &Problem,
    perturbed: &Problem,
) -> Result<DependenceReport> {
    if base.params != perturbed.params || base.fns != perturbed.fns {
        return Err(KwcError::Precondition(
            "paired runs must share model and scheme parameters".into(),
        ));
    }
    base.eta0.grid().check_same(perturbed.eta0.grid())?;
    let (r1, r2) = run_pair(base, perturbed)?;
    let (fns, params) = (&base.fns, &base.params);
    let mut times = Vec::new();
    let mut j_values = Vec::new();
    for (s1, s2) in r1.trajectory.states.iter().zip(&r2.trajectory.states) {
        times.push(s1.time);
        j_values.push(compute_j(
            &s1.eta, &s1.theta, &s2.eta, &s2.theta, fns, params,
        )?);
    }
    let (gu, gv) = base.forcing().squared_gap(&perturbed.forcing());
    let data_gap = j_values[0] + gu + gv;
    let j_max = j_values.iter().cloned().fold(0.0, f64::max);
    let empirical_ratio = if data_gap == 0.0 && j_max == 0.0 {
        0.0
    } else {
        j_max / data_gap
    };
    Ok(DependenceReport {
        times,
        j_values,
        data_gap,
        empirical_ratio,
    })
}

/// `C₉ = (1+μ²)/(1∧μ²) · exp(2T|g'|_{L∞(-M,M)})`.
pub fn comparison_constant(mu: f64, horizon: f64, lip_g: f64) -> f64 {
    (1.0 + mu * mu) / 1f64.min(mu * mu) * (2.0 * horizon * lip_g).exp()
}

/// η-only march against a prescribed θ trajectory.
pub fn eta_march(
    eta0: &ScalarField,
    thetas: &Trajectory,
    forcing: &ForcingSequence,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<Vec<ScalarField>> {
    let n = forcing.steps().min(thetas.len() - 1);
    let mut out = Vec::with_capacity(n + 1);
    out.push(eta0.clone());
    for i in 1..=n {
        let (next, _) = solve_eta_step(
            &out[i - 1],
            &thetas.states[i].theta,
            forcing.u(i),
            fns,
            params,
        )?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    /// `|[η¹-η²]⁺(t_i)|_V²`
    pub excess: Vec<f64>,
    pub initial_excess: f64,
    pub c9: f64,
    /// whether `η¹₀ <= η²₀` cellwise
    pub ordered: bool,
    /// largest `excess_i - (C₉ · initial_excess + tol)`
    pub worst_margin: f64,
    pub passed: bool,
}

/// Absolute tolerance of the comparison check.
pub const COMPARISON_TOL: f64 = 1e-8;

/// Two η-marches sharing a frozen θ trajectory and forcing. With ordered
/// initial data the positive part of the difference must stay below
/// `COMPARISON_TOL` in V-norm; otherwise the squared V-norm is checked
/// against `C₉ |[η¹₀-η²₀]⁺|_V² + COMPARISON_TOL`.
pub fn comparison_experiment(
    eta0_1: &ScalarField,
    eta0_2: &ScalarField,
    reference: &Trajectory,
    forcing: &ForcingSequence,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<ComparisonReport> {
    eta0_1.grid().check_same(eta0_2.grid())?;
    let (m1, m2) = thread::scope(|s| {
        let h1 = s.spawn(|| eta_march(eta0_1, reference, forcing, fns, params));
        let h2 = s.spawn(|| eta_march(eta0_2, reference, forcing, fns, params));
        (
            h1.join().expect("march thread panicked"),
            h2.join().expect("march thread panicked"),
        )
    });
    let (m1, m2) = (m1?, m2?);
    let excess: Vec<f64> = m1
        .iter()
        .zip(&m2)
        .map(|(a, b)| norm_v(&a.sub(b).positive_part()).powi(2))
        .collect();
    let times = (0..excess.len()).map(|i| i as f64 * params.tau).collect();
    let ordered = eta0_1
        .values()
        .iter()
        .zip(eta0_2.values())
        .all(|(a, b)| a <= b);
    let horizon = (excess.len() - 1) as f64 * params.tau;
    let c9 = comparison_constant(params.mu, horizon, fns.lip_g());
    let initial_excess = excess[0];
    let (worst_margin, passed) = if ordered {
        let worst = excess.iter().map(|e| e.sqrt()).fold(0.0, f64::max);
        (worst - COMPARISON_TOL, worst <= COMPARISON_TOL)
    } else {
        let bound = c9 * initial_excess + COMPARISON_TOL;
        let worst = excess
            .iter()
            .map(|e| e - bound)
            .fold(f64::NEG_INFINITY, f64::max);
        (worst, worst <= 0.0)
    };
    Ok(ComparisonReport {
        times,
        excess,
        initial_excess,
        c9,
        ordered,
        worst_margin,
        passed,
    })
}

/// Confinement threshold for `|η| <= M`.
pub const LINFTY_TOL: f64 = 1e-8;

/// `max_i max_cells (|η_i| - M)`.
pub fn linfty_confinement_check(trajectory: &Trajectory, m: f64) -> f64 {
    trajectory
        .states
        .iter()
        .map(|s| s.eta.max_abs() - m)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineAxis {
    Tau,
    Eps,
}

impl std::str::FromStr for RefineAxis {
    type Err = KwcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(RefineAxis::Tau),
            "eps" => Ok(RefineAxis::Eps),
            other => Err(KwcError::Config(format!(
                "unknown refinement axis `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTable {
    pub axis: Option<RefineAxis>,
    pub levels: Vec<f64>,
    /// `F_ε` at the final time, per level
    pub terminal_energies: Vec<f64>,
    /// `|η^{(k)}(T) - η^{(k+1)}(T)|_H`
    pub eta_diffs: Vec<f64>,
    /// `|θ^{(k)}(T) - θ^{(k+1)}(T)|_H`
    pub theta_diffs: Vec<f64>,
    /// `|F^{(k)} - F^{(k+1)}|`
    pub energy_diffs: Vec<f64>,
    pub eta_orders: Vec<f64>,
    pub theta_orders: Vec<f64>,
}

fn log2_ratios(d: &[f64]) -> Vec<f64> {
    d.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Halve τ (or ε) `levels - 1` times starting from the problem's value and
/// compare successive terminal states.
pub fn refinement_study(
    base: &Problem,
    axis: RefineAxis,
    levels: usize,
) -> Result<RefinementTable> {
    let mut table = RefinementTable {
        axis: Some(axis),
        levels: Vec::new(),
        terminal_energies: Vec::new(),
        eta_diffs: Vec::new(),
        theta_diffs: Vec::new(),
        energy_diffs: Vec::new(),
        eta_orders: Vec::new(),
        theta_orders: Vec::new(),
    };
    if levels == 0 {
        return Ok(table);
    }
    let start = match axis {
        RefineAxis::Tau => base.params.tau,
        RefineAxis::Eps => base.params.eps,
    };
    let problems: Vec<Problem> = (0..levels)
        .map(|k| {
            let value = start / 2f64.powi(k as i32);
            let mut p = base.params;
            match axis {
                RefineAxis::Tau => p.tau = value,
                RefineAxis::Eps => p.eps = value,
            }
            table.levels.push(value);
            base.with_params(p)
        })
        .collect();
    let (_, tau0) = max_stable_tau(&base.fns, base.params.mu);
    if let Some(p) = problems.iter().find(|p| !(p.params.tau < tau0)) {
        return Err(KwcError::Precondition(format!(
            "refinement level tau = {} violates tau < tau0 = {tau0}",
            p.params.tau
        )));
    }
    let runs: Vec<Result<Run>> = thread::scope(|s| {
        let handles: Vec<_> = problems.iter().map(|p| s.spawn(move || p.run())).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("refinement thread panicked"))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    for (p, r) in problems.iter().zip(&runs) {
        let last = r.trajectory.last();
        table
            .terminal_energies
            .push(energy_f_eps(&last.eta, &last.theta, &p.fns, p.params.eps)?);
    }
    for w in runs.windows(2) {
        let (a, b) = (w[0].trajectory.last(), w[1].trajectory.last());
        if (a.time - b.time).abs() > 1e-9 {
            return Err(KwcError::Precondition(format!(
                "refinement levels end at different times ({} vs {}); choose T as a multiple of tau",
                a.time, b.time
            )));
        }
        table.eta_diffs.push(norm_h(&a.eta.sub(&b.eta)));
        table.theta_diffs.push(norm_h(&a.theta.sub(&b.theta)));
    }
    table.energy_diffs = table
        .terminal_energies
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .collect();
    table.eta_orders = log2_ratios(&table.eta_diffs);
    table.theta_orders = log2_ratios(&table.theta_diffs);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::default_model;
    use approx::assert_relative_eq;

    #[test]
    fn j_examples() {
        let grid = Grid::line(5, 1.0).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = SchemeParams::default();
        let e = ScalarField::from_fn(&grid, |x| x[0].sin());
        let t = ScalarField::from_fn(&grid, |x| x[0] * x[0]);
        assert_eq!(compute_j(&e, &t, &e, &t, &fns, &p).unwrap(), 0.0);

        let z = ScalarField::zeros(&grid);
        let c = ScalarField::constant(&grid, 0.7);
        assert_relative_eq!(
            compute_j(&z, &c, &z, &z, &fns, &p).unwrap(),
            0.49,
            max_relative = 1e-14
        );
    }

    #[test]
    fn comparison_constant_closed_form() {
        assert_relative_eq!(
            comparison_constant(1.0, 1.0, 1.0),
            2.0 * 2f64.exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            comparison_constant(0.1, 0.5, 2.0),
            1.01 / 0.01 * 2f64.exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn zero_levels_give_empty_table() {
        let grid = Grid::line(4, 1.0).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = Problem::unforced(
            ScalarField::zeros(&grid),
            ScalarField::zeros(&grid),
            fns,
            SchemeParams::default(),
        );
        let t = refinement_study(&p, RefineAxis::Tau, 0).unwrap();
        assert!(t.levels.is_empty() && t.eta_diffs.is_empty());
    }

    #[test]
    fn linfty_check_on_constant_trajectory() {
        let grid = Grid::line(4, 1.0).unwrap();
        let s = stepper::TrajectoryState {
            step_index: 0,
            time: 0.0,
            eta: ScalarField::constant(&grid, 0.5),
            theta: ScalarField::zeros(&grid),
        };
        let tr = Trajectory {
            tau: 0.1,
            states: vec![s],
        };
        assert_relative_eq!(linfty_confinement_check(&tr, 2.0), -1.5);
    }
}
