//! The time march: forcing averages, step-size guards, the θ-then-η step
//! and the per-step energy ledger.

use std::fmt;

use crate::error::{KwcError, Result};
use crate::grid::{self, norm_face, norm_h, Grid, ScalarField};
use crate::model::{energy_f_eps, ModelFns, SchemeParams};
use crate::solvers::{solve_eta_step, solve_theta_step, EtaStepReport, SolveReport};

/// `(τ₁, τ₀)` for a given `μ` and Lipschitz bound `|g'|` on `[-M, M]`:
/// `τ₁ = ((1 ∧ μ²)/|g'|²)^½`, `τ₀ = min(τ₁, 1/(6|g'|))`. Both are `+∞` when
/// `g` is constant on the truncation window.
pub fn tau_guards(mu: f64, lip_g: f64) -> (f64, f64) {
    if lip_g <= 0.0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let tau1 = (1f64.min(mu * mu) / (lip_g * lip_g)).sqrt();
    let tau0 = tau1.min(1.0 / (6.0 * lip_g));
    (tau1, tau0)
}

pub fn max_stable_tau(fns: &ModelFns, mu: f64) -> (f64, f64) {
    tau_guards(mu, fns.lip_g())
}

/// `n_τ = min{n ∈ ℕ : nτ >= T}`.
pub fn n_tau(horizon: f64, tau: f64) -> usize {
    if horizon <= 0.0 {
        return 0;
    }
    let r = horizon / tau;
    (r - 1e-9 * r.max(1.0)).ceil().max(0.0) as usize
}

// 4-point Gauss-Legendre on [-1, 1]
const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Interval averages `ζ_i = (1/τ)∫_{t_{i-1}}^{t_i} ζ`, `i = 1..=n`, with `ζ_0 = 0`.
pub fn discretize_forcing(
    grid: &Grid,
    f: impl Fn(f64) -> ScalarField,
    tau: f64,
    horizon: f64,
) -> Vec<ScalarField> {
    let n = n_tau(horizon, tau);
    let mut out = Vec::with_capacity(n + 1);
    out.push(ScalarField::zeros(grid));
    for i in 1..=n {
        let mid = (i as f64 - 0.5) * tau;
        let mut acc = ScalarField::zeros(grid);
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc.axpy(0.5 * w, &f(mid + 0.5 * tau * x));
        }
        out.push(acc);
    }
    out
}

/// Step averages of `u` and `v`; index 0 holds zero fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSequence {
    tau: f64,
    u: Vec<ScalarField>,
    v: Vec<ScalarField>,
}

impl ForcingSequence {
    pub fn new(tau: f64, u: Vec<ScalarField>, v: Vec<ScalarField>) -> Result<Self> {
        if u.len() != v.len() || u.is_empty() {
            return Err(KwcError::Config(
                "forcing sequences must be non-empty and of equal length".into(),
            ));
        }
        if u[0].max_abs() != 0.0 || v[0].max_abs() != 0.0 {
            return Err(KwcError::Config("forcing at index 0 must vanish".into()));
        }
        Ok(ForcingSequence { tau, u, v })
    }

    pub fn from_fns(
        grid: &Grid,
        tau: f64,
        horizon: f64,
        u: impl Fn(f64) -> ScalarField,
        v: impl Fn(f64) -> ScalarField,
    ) -> Self {
        ForcingSequence {
            tau,
            u: discretize_forcing(grid, u, tau, horizon),
            v: discretize_forcing(grid, v, tau, horizon),
        }
    }

    pub fn zero(grid: &Grid, tau: f64, horizon: f64) -> Self {
        let n = n_tau(horizon, tau);
        ForcingSequence {
            tau,
            u: vec![ScalarField::zeros(grid); n + 1],
            v: vec![ScalarField::zeros(grid); n + 1],
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of time steps `n_τ`.
    pub fn steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn u(&self, i: usize) -> &ScalarField {
        &self.u[i]
    }

    pub fn v(&self, i: usize) -> &ScalarField {
        &self.v[i]
    }

    /// `sup |u|` over all step averages.
    pub fn u_sup(&self) -> f64 {
        self.u.iter().map(ScalarField::max_abs).fold(0.0, f64::max)
    }

    /// `τ Σ_i |a_i - b_i|_H²` for the `u` and `v` components.
    pub fn squared_gap(&self, other: &ForcingSequence) -> (f64, f64) {
        let gap = |a: &[ScalarField], b: &[ScalarField]| {
            self.tau
                * a.iter()
                    .zip(b)
                    .skip(1)
                    .map(|(x, y)| norm_h(&x.sub(y)).powi(2))
                    .sum::<f64>()
        };
        (gap(&self.u, &other.u), gap(&self.v, &other.v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub step_index: usize,
    pub time: f64,
    pub eta: ScalarField,
    pub theta: ScalarField,
}

/// One ledger row: every term of the per-step energy inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    pub f_eps: f64,
    /// `|η_i - η_{i-1}|_H²`
    pub d_eta_h: f64,
    /// `|∇(η_i - η_{i-1})|²`
    pub d_eta_grad: f64,
    /// `|θ_i - θ_{i-1}|_H²`
    pub d_theta_h: f64,
    /// `|∇(θ_i - θ_{i-1})|²`
    pub d_theta_grad: f64,
    /// `τ/2 |u_i|_H²`
    pub forcing_u: f64,
    /// `τ/(2δ_α) |v_i|_H²`
    pub forcing_v: f64,
    /// right-hand side minus left-hand side
    pub slack: f64,
    pub theta_report: SolveReport,
    pub eta_report: EtaStepReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub initial_f_eps: f64,
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn max_abs_energy(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.f_eps.abs())
            .fold(self.initial_f_eps.abs(), f64::max)
    }

    /// Energies `F_ε(η_i, θ_i)` for `i = 0..=n`.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial_f_eps)
            .chain(self.rows.iter().map(|r| r.f_eps))
            .collect()
    }
}

fn check_guard(fns: &ModelFns, params: &SchemeParams) -> Result<()> {
    let (tau1, tau0) = max_stable_tau(fns, params.mu);
    if !(params.tau < tau0) {
        return Err(KwcError::Precondition(format!(
            "time step tau = {} must satisfy tau < tau0 = {tau0} (tau1 = {tau1})",
            params.tau
        )));
    }
    Ok(())
}

/// Advance one step: θ first against `η_{i-1}`, then η against the new θ.
pub fn step(
    state: &TrajectoryState,
    u: &ScalarField,
    v: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<(TrajectoryState, LedgerRow)> {
    check_guard(fns, params)?;
    let (theta, theta_report) = solve_theta_step(&state.eta, &state.theta, v, fns, params)?;
    let (eta, eta_report) = solve_eta_step(&state.eta, &theta, u, fns, params)?;

    let tau = params.tau;
    let da = fns.delta_alpha();
    let f_prev = energy_f_eps(&state.eta, &state.theta, fns, params.eps)?;
    let f_eps = energy_f_eps(&eta, &theta, fns, params.eps)?;
    let de = eta.sub(&state.eta);
    let dt = theta.sub(&state.theta);
    let d_eta_h = norm_h(&de).powi(2);
    let d_eta_grad = norm_face(&grid::grad(&de)).powi(2);
    let d_theta_h = norm_h(&dt).powi(2);
    let d_theta_grad = norm_face(&grid::grad(&dt)).powi(2);
    let forcing_u = 0.5 * tau * norm_h(u).powi(2);
    let forcing_v = 0.5 * tau / da * norm_h(v).powi(2);
    let mu2 = params.mu * params.mu;
    let nu2 = params.nu * params.nu;
    let lhs = d_eta_h / (4.0 * tau)
        + mu2 / tau * d_eta_grad
        + da / (2.0 * tau) * d_theta_h
        + nu2 / tau * d_theta_grad
        + f_eps;
    let rhs = f_prev + forcing_u + forcing_v;

    let next = TrajectoryState {
        step_index: state.step_index + 1,
        time: (state.step_index + 1) as f64 * tau,
        eta,
        theta,
    };
    let row = LedgerRow {
        step: next.step_index,
        time: next.time,
        f_eps,
        d_eta_h,
        d_eta_grad,
        d_theta_h,
        d_theta_grad,
        forcing_u,
        forcing_v,
        slack: rhs - lhs,
        theta_report,
        eta_report,
    };
    Ok((next, row))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: f64,
    pub states: Vec<TrajectoryState>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Run {
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
}

/// A run aborted by a failing step, with everything computed before it.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub partial: Run,
    pub error: KwcError,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run aborted after {} steps: {}",
            self.partial.ledger.rows.len(),
            self.error
        )
    }
}

impl std::error::Error for RunFailure {}

impl From<RunFailure> for KwcError {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

/// March `(η₀, θ₀)` through all steps of `forcing`.
#[allow(clippy::result_large_err)] // the partial run travels with the error
pub fn run(
    eta0: &ScalarField,
    theta0: &ScalarField,
    forcing: &ForcingSequence,
    fns: &ModelFns,
    params: &SchemeParams,
) -> std::result::Result<Run, RunFailure> {
    let tau = params.tau;
    let mut out = Run {
        trajectory: Trajectory {
            tau,
            states: vec![TrajectoryState {
                step_index: 0,
                time: 0.0,
                eta: eta0.clone(),
                theta: theta0.clone(),
            }],
        },
        ledger: EnergyLedger::default(),
    };
    let pre = || -> Result<f64> {
        params.validate()?;
        eta0.grid().check_same(theta0.grid())?;
        eta0.grid().check_same(forcing.u(0).grid())?;
        if (forcing.tau() - tau).abs() > 1e-15 * tau {
            return Err(KwcError::Precondition(format!(
                "forcing built for tau = {} but scheme uses {tau}",
                forcing.tau()
            )));
        }
        if eta0.max_abs() > fns.m() {
            return Err(KwcError::Precondition(format!(
                "|eta0|_inf = {} exceeds the truncation level M = {}",
                eta0.max_abs(),
                fns.m()
            )));
        }
        check_guard(fns, params)?;
        energy_f_eps(eta0, theta0, fns, params.eps)
    };
    match pre() {
        Ok(f0) => out.ledger.initial_f_eps = f0,
        Err(error) => {
            return Err(RunFailure {
                partial: out,
                error,
            })
        }
    }
    for i in 1..=forcing.steps() {
        let current = out.trajectory.last();
        match step(current, forcing.u(i), forcing.v(i), fns, params) {
            Ok((next, row)) => {
                out.trajectory.states.push(next);
                out.ledger.rows.push(row);
            }
            Err(error) => {
                return Err(RunFailure {
                    partial: out,
                    error,
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolantKind {
    /// `z_i` on `(t_{i-1}, t_i]`
    Forward,
    /// `z_i` on `(t_i, t_{i+1}]`
    Backward,
    /// affine blend of `z_{i-1}` and `z_i` on `[t_{i-1}, t_i)`
    Linear,
}

pub fn eval_interpolant(
    trajectory: &Trajectory,
    t: f64,
    kind: InterpolantKind,
) -> Result<(ScalarField, ScalarField)> {
    let tau = trajectory.tau;
    let n = trajectory.states.len() - 1;
    let t_end = n as f64 * tau;
    let slop = 1e-12 * tau;
    if !(t >= -slop && t <= t_end + slop) {
        return Err(KwcError::Precondition(format!(
            "t = {t} outside [0, {t_end}]"
        )));
    }
    let k = t / tau;
    let node = k.round();
    let on_node = (k - node).abs() < 1e-9;
    let pick = |i: usize| {
        let s = &trajectory.states[i.min(n)];
        (s.eta.clone(), s.theta.clone())
    };
    Ok(match kind {
        InterpolantKind::Forward => {
            if on_node {
                pick(node as usize)
            } else {
                pick(k.ceil() as usize)
            }
        }
        InterpolantKind::Backward => {
            if on_node {
                pick((node as usize).saturating_sub(1))
            } else {
                pick(k.floor() as usize)
            }
        }
        InterpolantKind::Linear => {
            if on_node {
                pick(node as usize)
            } else {
                let i = k.ceil() as usize;
                let w = (t - (i - 1) as f64 * tau) / tau;
                let (a, b) = (&trajectory.states[i - 1], &trajectory.states[i]);
                (
                    b.eta.scale(w).add(&a.eta.scale(1.0 - w)),
                    b.theta.scale(w).add(&a.theta.scale(1.0 - w)),
                )
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    pub worst_slack: f64,
    pub worst_step: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Minimum slack over the ledger against `-1e-9 (1 + max |F_ε|)`.
pub fn check_energy_inequality(ledger: &EnergyLedger) -> Result<EnergyCheck> {
    let worst = ledger
        .rows
        .iter()
        .min_by(|a, b| a.slack.total_cmp(&b.slack))
        .ok_or_else(|| KwcError::Precondition("empty energy ledger".into()))?;
    let tolerance = 1e-9 * (1.0 + ledger.max_abs_energy());
    Ok(EnergyCheck {
        worst_slack: worst.slack,
        worst_step: worst.step,
        tolerance,
        passed: worst.slack >= -tolerance,
    })
}
