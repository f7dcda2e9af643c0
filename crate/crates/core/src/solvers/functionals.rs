use super::ConvexObjective;
use crate::error::Result;
use crate::grid::{
    self, div, forward_cell_gradients, inner_h_unchecked, neumann_laplacian, norm_face,
    scatter_forward, Grid, ScalarField, MAX_DIM,
};
use crate::model::{gamma_eps, ModelFns, SchemeParams};

fn stiffness_diag(grid: &Grid) -> f64 {
    grid.spacing().iter().map(|h| 2.0 / (h * h)).sum()
}

/// `-div` of the flux of `Σ_c a_c γ_ε(y_c)` at `z`, i.e. its H-gradient.
fn tv_gradient(coef: &[f64], z: &ScalarField, eps: f64) -> ScalarField {
    let grid = z.grid();
    let ys = forward_cell_gradients(&grid::grad(z));
    let flux: Vec<[f64; MAX_DIM]> = ys
        .iter()
        .zip(coef)
        .map(|(y, &a)| {
            let s = a / gamma_eps(y, eps);
            [s * y[0], s * y[1]]
        })
        .collect();
    div(&scatter_forward(grid, &flux)).scale(-1.0)
}

fn tv_hessian_apply(coef: &[f64], z: &ScalarField, d: &ScalarField, eps: f64) -> ScalarField {
    let grid = z.grid();
    let ys = forward_cell_gradients(&grid::grad(z));
    let ds = forward_cell_gradients(&grid::grad(d));
    let flux: Vec<[f64; MAX_DIM]> = ys
        .iter()
        .zip(&ds)
        .zip(coef)
        .map(|((y, dy), &a)| {
            let g = gamma_eps(y, eps);
            let proj = (y[0] * dy[0] + y[1] * dy[1]) / (g * g * g);
            [a * (dy[0] / g - y[0] * proj), a * (dy[1] / g - y[1] * proj)]
        })
        .collect();
    div(&scatter_forward(grid, &flux)).scale(-1.0)
}

/// Convex functional whose minimizer is the θ-step:
///
/// ```text
/// Υ_*(z) = 1/(2τ) ∫ α₀(T_M η̃)|z - θ̃₀|² + ∫ α̃_M(η̃) γ_ε(∇z)
///        + ν²/(2τ) ∫ |∇(z - θ̃₀)|² - ∫ ṽ z
/// ```
#[derive(Debug, Clone)]
pub struct UpsilonStar {
    grid: Grid,
    mobility: Vec<f64>,
    coef: Vec<f64>,
    theta0: ScalarField,
    v: ScalarField,
    tau: f64,
    nu: f64,
    eps: f64,
}

impl UpsilonStar {
    pub fn new(
        eta_tilde: &ScalarField,
        theta0_tilde: &ScalarField,
        v_tilde: &ScalarField,
        fns: &ModelFns,
        params: &SchemeParams,
    ) -> Result<Self> {
        let grid = *eta_tilde.grid();
        grid.check_same(theta0_tilde.grid())?;
        grid.check_same(v_tilde.grid())?;
        Ok(UpsilonStar {
            grid,
            mobility: eta_tilde
                .values()
                .iter()
                .map(|&r| fns.alpha0_trunc(r))
                .collect(),
            coef: eta_tilde
                .values()
                .iter()
                .map(|&r| fns.tilde_alpha(r))
                .collect(),
            theta0: theta0_tilde.clone(),
            v: v_tilde.clone(),
            tau: params.tau,
            nu: params.nu,
            eps: params.eps,
        })
    }

    pub(crate) fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub(crate) fn mobility(&self) -> &[f64] {
        &self.mobility
    }

    pub(crate) fn theta0(&self) -> &ScalarField {
        &self.theta0
    }

    pub(crate) fn v(&self) -> &ScalarField {
        &self.v
    }

    pub(crate) fn tau(&self) -> f64 {
        self.tau
    }

    pub(crate) fn nu(&self) -> f64 {
        self.nu
    }

    pub(crate) fn eps(&self) -> f64 {
        self.eps
    }
}

impl ConvexObjective for UpsilonStar {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn value(&self, z: &ScalarField) -> f64 {
        let vol = self.grid.cell_volume();
        let dz = z.sub(&self.theta0);
        let mass: f64 = dz
            .values()
            .iter()
            .zip(&self.mobility)
            .map(|(d, w)| w * d * d)
            .sum();
        let ys = forward_cell_gradients(&grid::grad(z));
        let tv: f64 = ys
            .iter()
            .zip(&self.coef)
            .map(|(y, a)| a * gamma_eps(y, self.eps))
            .sum();
        let stiff = norm_face(&grid::grad(&dz)).powi(2);
        vol * (mass / (2.0 * self.tau) + tv) + self.nu * self.nu / (2.0 * self.tau) * stiff
            - inner_h_unchecked(&self.v, z)
    }

    fn gradient(&self, z: &ScalarField) -> ScalarField {
        let dz = z.sub(&self.theta0);
        let mut out = ScalarField::from_values(
            &self.grid,
            dz.values()
                .iter()
                .zip(&self.mobility)
                .map(|(d, w)| w * d / self.tau)
                .collect(),
        )
        .expect("same grid");
        out.axpy(1.0, &tv_gradient(&self.coef, z, self.eps));
        out.axpy(self.nu * self.nu / self.tau, &neumann_laplacian(&dz));
        out.axpy(-1.0, &self.v);
        out
    }

    fn hessian_apply(&self, z: &ScalarField, d: &ScalarField) -> ScalarField {
        let mut out = ScalarField::from_values(
            &self.grid,
            d.values()
                .iter()
                .zip(&self.mobility)
                .map(|(x, w)| w * x / self.tau)
                .collect(),
        )
        .expect("same grid");
        out.axpy(1.0, &tv_hessian_apply(&self.coef, z, d, self.eps));
        out.axpy(self.nu * self.nu / self.tau, &neumann_laplacian(d));
        out
    }

    fn hessian_diagonal(&self, z: &ScalarField) -> ScalarField {
        let k = stiffness_diag(&self.grid);
        let gam = crate::model::cell_gamma(z, self.eps);
        let vals = self
            .mobility
            .iter()
            .zip(&self.coef)
            .zip(gam)
            .map(|((w, a), g)| w / self.tau + k * (self.nu * self.nu / self.tau + a / g))
            .collect();
        ScalarField::from_values(&self.grid, vals).expect("same grid")
    }
}

/// Convex functional minimized inside each Picard sweep of the η-step,
/// with `g` evaluated at the lagged iterate `η†`:
///
/// ```text
/// Υ(z) = 1/(2τ) ∫ |z - η̃₀|² + ½ ∫ |∇z|² + μ²/(2τ) ∫ |∇(z - η̃₀)|²
///      + ∫ g(T_M η†) z + ∫ α̃_M(z) γ_ε(∇θ̃) - ∫ ũ z
/// ```
#[derive(Debug, Clone)]
pub struct Upsilon {
    grid: Grid,
    fns: ModelFns,
    lagged_g: Vec<f64>,
    gamma: Vec<f64>,
    eta0: ScalarField,
    u: ScalarField,
    tau: f64,
    mu: f64,
}

impl Upsilon {
    pub fn new(
        eta_dagger: &ScalarField,
        eta0_tilde: &ScalarField,
        theta_tilde: &ScalarField,
        u_tilde: &ScalarField,
        fns: &ModelFns,
        params: &SchemeParams,
    ) -> Result<Self> {
        let grid = *eta0_tilde.grid();
        grid.check_same(eta_dagger.grid())?;
        grid.check_same(theta_tilde.grid())?;
        grid.check_same(u_tilde.grid())?;
        Ok(Upsilon {
            grid,
            fns: *fns,
            lagged_g: eta_dagger
                .values()
                .iter()
                .map(|&r| fns.g_trunc(r))
                .collect(),
            gamma: crate::model::cell_gamma(theta_tilde, params.eps),
            eta0: eta0_tilde.clone(),
            u: u_tilde.clone(),
            tau: params.tau,
            mu: params.mu,
        })
    }

    /// Replace the lagged iterate without recomputing the θ-dependent parts.
    pub(crate) fn relag(&mut self, eta_dagger: &ScalarField) {
        for (g, &r) in self.lagged_g.iter_mut().zip(eta_dagger.values()) {
            *g = self.fns.g_trunc(r);
        }
    }
}

impl ConvexObjective for Upsilon {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn value(&self, z: &ScalarField) -> f64 {
        let vol = self.grid.cell_volume();
        let dz = z.sub(&self.eta0);
        let mass: f64 = dz.values().iter().map(|d| d * d).sum();
        let pointwise: f64 = z
            .values()
            .iter()
            .zip(&self.lagged_g)
            .zip(&self.gamma)
            .zip(self.u.values())
            .map(|(((&r, gl), gam), u)| (gl - u) * r + self.fns.tilde_alpha(r) * gam)
            .sum();
        vol * (mass / (2.0 * self.tau) + pointwise)
            + 0.5 * norm_face(&grid::grad(z)).powi(2)
            + self.mu * self.mu / (2.0 * self.tau) * norm_face(&grid::grad(&dz)).powi(2)
    }

    fn gradient(&self, z: &ScalarField) -> ScalarField {
        let dz = z.sub(&self.eta0);
        let vals = z
            .values()
            .iter()
            .zip(dz.values())
            .zip(&self.lagged_g)
            .zip(&self.gamma)
            .zip(self.u.values())
            .map(|((((&r, d), gl), gam), u)| {
                d / self.tau + gl + self.fns.alpha_prime_trunc(r) * gam - u
            })
            .collect();
        let mut out = ScalarField::from_values(&self.grid, vals).expect("same grid");
        out.axpy(1.0, &neumann_laplacian(z));
        out.axpy(self.mu * self.mu / self.tau, &neumann_laplacian(&dz));
        out
    }

    fn hessian_apply(&self, z: &ScalarField, d: &ScalarField) -> ScalarField {
        let vals = z
            .values()
            .iter()
            .zip(d.values())
            .zip(&self.gamma)
            .map(|((&r, x), gam)| (1.0 / self.tau + self.fns.alpha_second_trunc(r) * gam) * x)
            .collect();
        let mut out = ScalarField::from_values(&self.grid, vals).expect("same grid");
        out.axpy(1.0 + self.mu * self.mu / self.tau, &neumann_laplacian(d));
        out
    }

    fn hessian_diagonal(&self, z: &ScalarField) -> ScalarField {
        let k = stiffness_diag(&self.grid) * (1.0 + self.mu * self.mu / self.tau);
        let vals = z
            .values()
            .iter()
            .zip(&self.gamma)
            .map(|(&r, gam)| 1.0 / self.tau + self.fns.alpha_second_trunc(r) * gam + k)
            .collect();
        ScalarField::from_values(&self.grid, vals).expect("same grid")
    }
}

pub fn functional_upsilon_star(
    z: &ScalarField,
    eta_tilde: &ScalarField,
    theta0_tilde: &ScalarField,
    v_tilde: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<f64> {
    z.grid().check_same(eta_tilde.grid())?;
    Ok(UpsilonStar::new(eta_tilde, theta0_tilde, v_tilde, fns, params)?.value(z))
}

pub fn functional_upsilon(
    z: &ScalarField,
    eta_dagger: &ScalarField,
    eta0_tilde: &ScalarField,
    theta_tilde: &ScalarField,
    u_tilde: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<f64> {
    z.grid().check_same(eta0_tilde.grid())?;
    Ok(Upsilon::new(eta_dagger, eta0_tilde, theta_tilde, u_tilde, fns, params)?.value(z))
}

/// Residual of the θ-equation
/// `α₀(T_M η_{i-1})(θ - θ_{i-1})/τ - div(α̃_M(η_{i-1})∇γ_ε(∇θ)) + ν²/τ A_N(θ - θ_{i-1}) - v_i`.
pub fn theta_equation_residual(
    theta: &ScalarField,
    eta_prev: &ScalarField,
    theta_prev: &ScalarField,
    v: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<ScalarField> {
    theta.grid().check_same(eta_prev.grid())?;
    Ok(UpsilonStar::new(eta_prev, theta_prev, v, fns, params)?.gradient(theta))
}

/// Residual of the η-equation
/// `(η - η_{i-1})/τ + A_N(η + μ²/τ(η - η_{i-1})) + g(T_M η) + α'(T_M η)γ_ε(∇θ_i) - u_i`.
pub fn eta_equation_residual(
    eta: &ScalarField,
    eta_prev: &ScalarField,
    theta: &ScalarField,
    u: &ScalarField,
    fns: &ModelFns,
    params: &SchemeParams,
) -> Result<ScalarField> {
    Ok(Upsilon::new(eta, eta_prev, theta, u, fns, params)?.gradient(eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_h, norm_h};
    use crate::model::default_model;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
        let vals = (0..grid.num_cells())
            .map(|_| rng.gen_range(-amp..amp))
            .collect();
        ScalarField::from_values(grid, vals).unwrap()
    }

    fn params() -> SchemeParams {
        SchemeParams {
            mu: 0.3,
            nu: 0.2,
            eps: 0.1,
            tau: 0.05,
            ..SchemeParams::default()
        }
    }

    #[test]
    fn upsilon_star_at_stationary_constant() {
        let grid = Grid::line(6, 1.0).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = params();
        let c = 0.7;
        let eta = ScalarField::constant(&grid, c);
        let th = ScalarField::constant(&grid, -0.4);
        let v = ScalarField::zeros(&grid);
        let val = functional_upsilon_star(&th, &eta, &th, &v, &fns, &p).unwrap();
        assert_relative_eq!(val, fns.tilde_alpha(c) * p.eps, max_relative = 1e-14);
    }

    #[test]
    fn upsilon_at_zero() {
        let grid = Grid::new(2, &[3, 4], &[1.0, 1.0]).unwrap();
        let fns = default_model().truncated(2.0).unwrap();
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dag = random_field(&grid, &mut rng, 1.0);
        let e0 = random_field(&grid, &mut rng, 1.0);
        let th = random_field(&grid, &mut rng, 1.0);
        let u = random_field(&grid, &mut rng, 1.0);
        let zero = ScalarField::zeros(&grid);
        let val = functional_upsilon(&zero, &dag, &e0, &th, &u, &fns, &p).unwrap();
        let gam = crate::model::cell_gamma(&th, p.eps);
        let expected = norm_h(&e0).powi(2) / (2.0 * p.tau)
            + p.mu * p.mu / (2.0 * p.tau) * norm_face(&grid::grad(&e0)).powi(2)
            + grid.cell_volume() * fns.tilde_alpha(0.0) * gam.iter().sum::<f64>();
        assert_relative_eq!(val, expected, max_relative = 1e-13);
    }

    fn check_derivatives(obj: &dyn ConvexObjective, rng: &mut ChaCha8Rng) {
        let grid = *obj.grid();
        let z = random_field(&grid, rng, 1.5);
        let d = random_field(&grid, rng, 1.0);
        let h = 1e-6;
        let fd = (obj.value(&z.add(&d.scale(h))) - obj.value(&z.sub(&d.scale(h)))) / (2.0 * h);
        let an = inner_h(&obj.gradient(&z), &d).unwrap();
        assert!(
            (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
            "fd {fd} vs {an}"
        );

        let d2 = random_field(&grid, rng, 1.0);
        let h1 = inner_h(&obj.hessian_apply(&z, &d), &d2).unwrap();
        let h2 = inner_h(&d, &obj.hessian_apply(&z, &d2)).unwrap();
        assert!((h1 - h2).abs() <= 1e-10 * (1.0 + h1.abs()));
        assert!(inner_h(&obj.hessian_apply(&z, &d), &d).unwrap() >= 0.0);

        let gfd = obj
            .gradient(&z.add(&d.scale(h)))
            .sub(&obj.gradient(&z.sub(&d.scale(h))))
            .scale(0.5 / h);
        let hd = obj.hessian_apply(&z, &d);
        assert!(gfd.sub(&hd).max_abs() <= 1e-4 * (1.0 + hd.max_abs()));
    }

    #[test]
    fn derivative_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fns = default_model().truncated(1.0).unwrap();
        let p = params();
        for grid in [
            Grid::line(7, 1.0).unwrap(),
            Grid::new(2, &[4, 3], &[1.0, 0.5]).unwrap(),
        ] {
            for _ in 0..10 {
                let a = random_field(&grid, &mut rng, 1.5);
                let b = random_field(&grid, &mut rng, 1.0);
                let c = random_field(&grid, &mut rng, 1.0);
                let e = random_field(&grid, &mut rng, 1.0);
                let star = UpsilonStar::new(&a, &b, &c, &fns, &p).unwrap();
                check_derivatives(&star, &mut rng);
                let ups = Upsilon::new(&a, &b, &c, &e, &fns, &p).unwrap();
                check_derivatives(&ups, &mut rng);
            }
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let fns = default_model().truncated(1.0).unwrap();
        let a = ScalarField::zeros(&Grid::line(4, 1.0).unwrap());
        let b = ScalarField::zeros(&Grid::line(5, 1.0).unwrap());
        assert!(UpsilonStar::new(&a, &b, &a, &fns, &params()).is_err());
        assert!(functional_upsilon(&b, &a, &a, &a, &a, &fns, &params()).is_err());
    }
}
