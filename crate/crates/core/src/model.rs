//! Material functions, truncation, the `γ_ε` regularizer and the free
//! energies `F` and `F_ε`.
//!
//! The built-in model family is polynomial:
//!
//! ```text
//! g(r)  = g1 r + g0                 G(r) = (g1 r + g0)^2 / (2 g1)   (G ≡ 0 when g ≡ 0)
//! α(r)  = a0 + a1 r + a2 r^2 / 2    α'(r) = a1 + a2 r
//! α₀(r) = b0 + b1 r + b2 r^2
//! ```
//!
//! Every sup-norm on `[-M, M]` the scheme needs is then available in closed
//! form, so the step-size guards and the comparison constant are exact.
//!
//! The singular-diffusion term `∫ a(η) γ_ε(∇θ)` is integrated cellwise: each
//! cell uses the vector of its forward face differences (zero on the upper
//! boundary of an axis). Constant states therefore contribute exactly
//! `ε ∫ a(η)`, and the derivative with respect to `η` is the pointwise product
//! `a'(η_c) γ_ε(∇θ)_c`.

use crate::error::{KwcError, Result};
use crate::grid::{self, forward_cell_gradients, norm_face, ScalarField, MAX_DIM};

/// Clamp `r` into `[-m, m]`.
pub fn truncate(r: f64, m: f64) -> f64 {
    r.max(-m).min(m)
}

/// `γ_ε(y) = sqrt(ε² + |y|²)`.
pub fn gamma_eps(y: &[f64], eps: f64) -> f64 {
    (eps * eps + y.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// `∇γ_ε(y) = y / γ_ε(y)`; its Euclidean norm is strictly below one.
pub fn dgamma_eps(y: &[f64], eps: f64) -> Vec<f64> {
    let g = gamma_eps(y, eps);
    y.iter().map(|v| v / g).collect()
}

/// Coefficients of the polynomial model family (before truncation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub g0: f64,
    pub g1: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
}

/// `g(r) = r - 1`, `G(r) = (r-1)²/2`, `α(r) = r²/2 + 0.01`, `α₀(r) = 1 + r²`.
pub fn default_model() -> ModelSpec {
    ModelSpec {
        g0: -1.0,
        g1: 1.0,
        a0: 0.01,
        a1: 0.0,
        a2: 1.0,
        b0: 1.0,
        b1: 0.0,
        b2: 1.0,
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        default_model()
    }
}

impl ModelSpec {
    pub fn g(&self, r: f64) -> f64 {
        self.g1 * r + self.g0
    }

    pub fn g_prime(&self, _r: f64) -> f64 {
        self.g1
    }

    #[allow(non_snake_case)]
    pub fn G(&self, r: f64) -> f64 {
        if self.g1 > 0.0 {
            let v = self.g(r);
            v * v / (2.0 * self.g1)
        } else {
            0.0
        }
    }

    pub fn alpha(&self, r: f64) -> f64 {
        self.a0 + self.a1 * r + 0.5 * self.a2 * r * r
    }

    pub fn alpha_prime(&self, r: f64) -> f64 {
        self.a1 + self.a2 * r
    }

    pub fn alpha_second(&self, _r: f64) -> f64 {
        self.a2
    }

    pub fn alpha0(&self, r: f64) -> f64 {
        self.b0 + self.b1 * r + self.b2 * r * r
    }

    pub fn alpha0_prime(&self, r: f64) -> f64 {
        self.b1 + 2.0 * self.b2 * r
    }

    /// Structural checks that do not depend on the truncation level.
    pub fn check_structure(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.g1 < 0.0 {
            problems.push("g must be nondecreasing in the polynomial family (g1 >= 0)".to_string());
        }
        if self.g1 == 0.0 && self.g0 != 0.0 {
            problems.push("constant g must vanish to admit a nonnegative primitive".to_string());
        }
        if self.alpha_prime(0.0).abs() > 1e-12 {
            problems.push(format!("alpha'(0) = {} must vanish", self.alpha_prime(0.0)));
        }
        if self.a2 < 0.0 {
            problems.push("alpha must be convex (a2 >= 0)".to_string());
        }
        if self.a0 < 0.0 {
            problems.push("alpha must be nonnegative (a0 >= 0)".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(KwcError::Model(problems.join("; ")))
        }
    }

    /// Fix the truncation level and cache the derived constants.
    pub fn truncated(&self, m: f64) -> Result<ModelFns> {
        self.check_structure()?;
        if !(m > 0.0) || !m.is_finite() {
            return Err(KwcError::Model(format!(
                "truncation level must be positive, got {m}"
            )));
        }
        // extrema of the quadratic α₀ over [-M, M]
        let mut a0_pts = vec![-m, m];
        if self.b2 != 0.0 {
            let vertex = -self.b1 / (2.0 * self.b2);
            if vertex.abs() < m {
                a0_pts.push(vertex);
            }
        }
        let delta_alpha = a0_pts
            .iter()
            .map(|&r| self.alpha0(r))
            .fold(f64::INFINITY, f64::min);
        if !(delta_alpha > 0.0) {
            return Err(KwcError::Model(format!(
                "alpha0 must be positive on [-M, M], inf = {delta_alpha}"
            )));
        }
        let sup = |f: &dyn Fn(f64) -> f64, pts: &[f64]| {
            pts.iter().map(|&r| f(r).abs()).fold(0.0, f64::max)
        };
        let ends = [-m, m];
        let fns = ModelFns {
            spec: *self,
            m,
            delta_alpha,
            lip_g: self.g1.abs(),
            sup_g: sup(&|r| self.g(r), &ends),
            sup_alpha_prime: sup(&|r| self.alpha_prime(r), &ends),
            sup_alpha0: sup(&|r| self.alpha0(r), &a0_pts),
            sup_alpha0_prime: sup(&|r| self.alpha0_prime(r), &ends),
        };
        fns.check_sampled()?;
        Ok(fns)
    }
}

/// Model functions together with a fixed truncation level `M` and the
/// constants derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFns {
    spec: ModelSpec,
    m: f64,
    delta_alpha: f64,
    lip_g: f64,
    sup_g: f64,
    sup_alpha_prime: f64,
    sup_alpha0: f64,
    sup_alpha0_prime: f64,
}

impl ModelFns {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Truncation level `M`.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// `δ_α = inf α₀` over the truncated range.
    pub fn delta_alpha(&self) -> f64 {
        self.delta_alpha
    }

    /// `|g'|_{L∞(-M, M)}`.
    pub fn lip_g(&self) -> f64 {
        self.lip_g
    }

    pub fn sup_g(&self) -> f64 {
        self.sup_g
    }

    pub fn sup_alpha_prime(&self) -> f64 {
        self.sup_alpha_prime
    }

    pub fn sup_alpha0(&self) -> f64 {
        self.sup_alpha0
    }

    pub fn sup_alpha0_prime(&self) -> f64 {
        self.sup_alpha0_prime
    }

    pub fn truncate(&self, r: f64) -> f64 {
        truncate(r, self.m)
    }

    /// `g(T_M r)`, the derivative of `G̃_M`.
    pub fn g_trunc(&self, r: f64) -> f64 {
        self.spec.g(self.truncate(r))
    }

    /// `α'(T_M r)`, the derivative of `α̃_M`.
    pub fn alpha_prime_trunc(&self, r: f64) -> f64 {
        self.spec.alpha_prime(self.truncate(r))
    }

    /// Second derivative of `α̃_M` (zero outside the truncation window).
    pub fn alpha_second_trunc(&self, r: f64) -> f64 {
        if r.abs() <= self.m {
            self.spec.alpha_second(r)
        } else {
            0.0
        }
    }

    /// `α₀(T_M r)`.
    pub fn alpha0_trunc(&self, r: f64) -> f64 {
        self.spec.alpha0(self.truncate(r))
    }

    /// `G` inside `[-M, M]`, continued linearly outside.
    pub fn tilde_g(&self, r: f64) -> f64 {
        let m = self.m;
        if r > m {
            self.spec.G(m) + self.spec.g(m) * (r - m)
        } else if r < -m {
            self.spec.G(-m) + self.spec.g(-m) * (r + m)
        } else {
            self.spec.G(r)
        }
    }

    /// `α` inside `[-M, M]`, continued linearly outside.
    pub fn tilde_alpha(&self, r: f64) -> f64 {
        let m = self.m;
        if r > m {
            self.spec.alpha(m) + self.spec.alpha_prime(m) * (r - m)
        } else if r < -m {
            self.spec.alpha(-m) + self.spec.alpha_prime(-m) * (r + m)
        } else {
            self.spec.alpha(r)
        }
    }

    fn check_sampled(&self) -> Result<()> {
        let s = &self.spec;
        let n = 512;
        let span = 2.0 * self.m;
        let h = 1e-5 * self.m.max(1.0);
        for i in 0..=n {
            let r = -span + 2.0 * span * i as f64 / n as f64;
            if s.G(r) < -1e-14 {
                return Err(KwcError::Model(format!("G({r}) < 0")));
            }
            if s.alpha(r) < -1e-14 {
                return Err(KwcError::Model(format!("alpha({r}) < 0")));
            }
            let dg = (s.G(r + h) - s.G(r - h)) / (2.0 * h);
            let da = (s.alpha(r + h) - s.alpha(r - h)) / (2.0 * h);
            if (dg - s.g(r)).abs() > 1e-6 * (1.0 + s.g(r).abs()) {
                return Err(KwcError::Model(format!("G' != g at {r}")));
            }
            if (da - s.alpha_prime(r)).abs() > 1e-6 * (1.0 + s.alpha_prime(r).abs()) {
                return Err(KwcError::Model(format!("alpha' inconsistent at {r}")));
            }
        }
        Ok(())
    }
}

/// Lattice step of the truncation-level search.
pub const TRUNCATION_STEP: f64 = 0.5;
/// Upper bound of the truncation-level search.
pub const TRUNCATION_MAX: f64 = 1e6;

/// Smallest `M` on `{|η₀|_∞ + k Δ}` with `M >= |η₀|_∞`, `g(M) >= u_sup` and
/// `g(-M) <= -u_sup`, rounded up to one decimal.
pub fn choose_truncation_level(eta0: &ScalarField, u_sup: f64, spec: &ModelSpec) -> Result<f64> {
    let base = eta0.max_abs();
    let u_sup = u_sup.abs();
    let ok = |m: f64| m > 0.0 && m >= base && spec.g(m) >= u_sup && spec.g(-m) <= -u_sup;
    let mut k = 0u64;
    loop {
        let m = base + k as f64 * TRUNCATION_STEP;
        if m > TRUNCATION_MAX {
            return Err(KwcError::Model(
                "g not coercive enough for this forcing".to_string(),
            ));
        }
        if ok(m) {
            let rounded = (m * 10.0 - 1e-9).ceil() / 10.0;
            if ok(rounded) {
                return Ok(rounded);
            }
        }
        k += 1;
    }
}

/// `γ_ε` of the forward cell gradient of `theta`, one value per cell.
pub fn cell_gamma(theta: &ScalarField, eps: f64) -> Vec<f64> {
    forward_cell_gradients(&grid::grad(theta))
        .iter()
        .map(|y| gamma_eps(y, eps))
        .collect()
}

fn cell_abs_grad(theta: &ScalarField) -> Vec<f64> {
    forward_cell_gradients(&grid::grad(theta))
        .iter()
        .map(|y: &[f64; MAX_DIM]| y.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// KWC energy `½∫|∇η|² + ∫G(η) + ∫α(η)|Dθ|`.
pub fn energy_f(eta: &ScalarField, theta: &ScalarField, fns: &ModelFns) -> Result<f64> {
    eta.grid().check_same(theta.grid())?;
    let vol = eta.grid().cell_volume();
    let s = fns.spec();
    let grad_part = 0.5 * norm_face(&grid::grad(eta)).powi(2);
    let potential: f64 = eta.values().iter().map(|&r| s.G(r)).sum();
    let tv: f64 = eta
        .values()
        .iter()
        .zip(cell_abs_grad(theta))
        .map(|(&r, a)| s.alpha(r) * a)
        .sum();
    Ok(grad_part + vol * (potential + tv))
}

/// Regularized energy `½∫|∇η|² + ∫G̃_M(η) + ∫α̃_M(η)γ_ε(∇θ)`.
pub fn energy_f_eps(
    eta: &ScalarField,
    theta: &ScalarField,
    fns: &ModelFns,
    eps: f64,
) -> Result<f64> {
    eta.grid().check_same(theta.grid())?;
    let vol = eta.grid().cell_volume();
    let grad_part = 0.5 * norm_face(&grid::grad(eta)).powi(2);
    let potential: f64 = eta.values().iter().map(|&r| fns.tilde_g(r)).sum();
    let tv: f64 = eta
        .values()
        .iter()
        .zip(cell_gamma(theta, eps))
        .map(|(&r, gam)| fns.tilde_alpha(r) * gam)
        .sum();
    Ok(grad_part + vol * (potential + tv))
}

/// Scheme constants and solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub mu: f64,
    pub nu: f64,
    pub eps: f64,
    pub tau: f64,
    pub horizon: f64,
    pub tol_newton: f64,
    pub tol_fixed_point: f64,
    pub max_newton_iters: usize,
    pub max_fp_iters: usize,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            mu: 0.1,
            nu: 0.1,
            eps: 0.05,
            tau: 0.01,
            horizon: 1.0,
            tol_newton: 1e-9,
            tol_fixed_point: 1e-10,
            max_newton_iters: 100,
            max_fp_iters: 500,
        }
    }
}

impl SchemeParams {
    /// Every violated constraint, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.mu > 0.0) {
            v.push(format!("scheme.mu = {} must be > 0 (the pseudo-parabolic coefficients need strictly positive mu and nu)", self.mu));
        }
        if !(self.nu > 0.0) {
            v.push(format!("scheme.nu = {} must be > 0 (the pseudo-parabolic coefficients need strictly positive mu and nu)", self.nu));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            v.push(format!("scheme.eps = {} must lie in (0, 1)", self.eps));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            v.push(format!("scheme.tau = {} must lie in (0, 1)", self.tau));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            v.push(format!(
                "scheme.T = {} must be finite and >= 0",
                self.horizon
            ));
        }
        if !(self.tol_newton > 0.0) {
            v.push("solver.tol_newton must be > 0".to_string());
        }
        if !(self.tol_fixed_point > 0.0) {
            v.push("solver.tol_fixed_point must be > 0".to_string());
        }
        if self.max_newton_iters == 0 || self.max_fp_iters == 0 {
            v.push("solver iteration caps must be positive".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(KwcError::Validation(v))
        }
    }
}
