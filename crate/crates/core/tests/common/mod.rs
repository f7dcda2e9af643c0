//! Independent dense reference implementations used by the integration
//! tests. Nothing here calls the library's operators or functionals: the
//! difference matrix is assembled explicitly and every functional is
//! rewritten from its definition.
#![allow(dead_code)]

use kwc::solvers::ConvexObjective;
use kwc::{Grid, ModelFns, ScalarField, SchemeParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Explicit face-by-cell difference matrix `D` (interior faces only) with
/// `(D z)_f = (z_right - z_left) / h_axis`.
#[derive(Debug, Clone)]
pub struct DenseOps {
    pub n: usize,
    pub vol: f64,
    pub rows: Vec<Vec<f64>>,
    /// for each cell and axis, the face row of its upper neighbour difference
    pub forward: Vec<[Option<usize>; 2]>,
}

impl DenseOps {
    pub fn new(grid: &Grid) -> Self {
        let cells = grid.cells();
        let (nx, ny) = if grid.dim() == 1 {
            (cells[0], 1)
        } else {
            (cells[0], cells[1])
        };
        let h = grid.spacing();
        let n = nx * ny;
        let mut rows = Vec::new();
        let mut forward = vec![[None, None]; n];
        let idx = |i: usize, j: usize| i * ny + j;
        for i in 0..nx.saturating_sub(1) {
            for j in 0..ny {
                let mut r = vec![0.0; n];
                r[idx(i, j)] = -1.0 / h[0];
                r[idx(i + 1, j)] = 1.0 / h[0];
                forward[idx(i, j)][0] = Some(rows.len());
                rows.push(r);
            }
        }
        if grid.dim() == 2 {
            for i in 0..nx {
                for j in 0..ny - 1 {
                    let mut r = vec![0.0; n];
                    r[idx(i, j)] = -1.0 / h[1];
                    r[idx(i, j + 1)] = 1.0 / h[1];
                    forward[idx(i, j)][1] = Some(rows.len());
                    rows.push(r);
                }
            }
        }
        DenseOps {
            n,
            vol: grid.cell_volume(),
            rows,
            forward,
        }
    }

    pub fn apply_d(&self, z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_dt(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, wf) in self.rows.iter().zip(w) {
            for (o, a) in out.iter_mut().zip(r) {
                *o += a * wf;
            }
        }
        out
    }

    /// Dense `DᵀD`.
    pub fn laplacian_matrix(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for r in &self.rows {
            for i in 0..self.n {
                if r[i] == 0.0 {
                    continue;
                }
                for j in 0..self.n {
                    a[i][j] += r[i] * r[j];
                }
            }
        }
        a
    }

    /// `∫|∇z|²` with the cell-volume weight.
    pub fn dirichlet(&self, z: &[f64]) -> f64 {
        self.vol * self.apply_d(z).iter().map(|x| x * x).sum::<f64>()
    }

    /// Forward-difference vector of each cell, zero past the upper boundary.
    pub fn cell_vectors(&self, z: &[f64]) -> Vec<[f64; 2]> {
        let dz = self.apply_d(z);
        self.forward
            .iter()
            .map(|f| [f[0].map_or(0.0, |k| dz[k]), f[1].map_or(0.0, |k| dz[k])])
            .collect()
    }

    /// Gradient (Euclidean, per unit cell volume) of `Σ_c a_c √(ε² + |y_c|²)`.
    fn tv_grad(&self, a: &[f64], z: &[f64], eps: f64) -> Vec<f64> {
        let ys = self.cell_vectors(z);
        let mut w = vec![0.0; self.rows.len()];
        for ((c, y), ac) in ys.iter().enumerate().zip(a) {
            let g = (eps * eps + y[0] * y[0] + y[1] * y[1]).sqrt();
            for (fk, yk) in self.forward[c].iter().zip(y) {
                if let Some(f) = fk {
                    w[*f] += ac * yk / g;
                }
            }
        }
        self.apply_dt(&w)
    }

    fn tv(&self, a: &[f64], z: &[f64], eps: f64) -> f64 {
        self.cell_vectors(z)
            .iter()
            .zip(a)
            .map(|(y, ac)| ac * (eps * eps + y[0] * y[0] + y[1] * y[1]).sqrt())
            .sum()
    }
}

fn trunc(r: f64, m: f64) -> f64 {
    r.clamp(-m, m)
}

/// Affine model `g(r) = g1 r + g0`, `α(r) = a0 + a1 r + a2 r²/2`,
/// `α₀(r) = b0 + b1 r + b2 r²` written out directly from coefficients.
#[derive(Debug, Clone, Copy)]
pub struct RefModel {
    pub c: kwc::ModelSpec,
    pub m: f64,
}

impl RefModel {
    pub fn from_fns(fns: &ModelFns) -> Self {
        RefModel {
            c: *fns.spec(),
            m: fns.m(),
        }
    }

    pub fn g_t(&self, r: f64) -> f64 {
        let s = trunc(r, self.m);
        self.c.g1 * s + self.c.g0
    }

    /// a primitive of `g ∘ T_M`
    pub fn big_g_t(&self, r: f64) -> f64 {
        let p = |s: f64| self.c.g0 * s + 0.5 * self.c.g1 * s * s;
        let m = self.m;
        if r > m {
            p(m) + self.g_t(m) * (r - m)
        } else if r < -m {
            p(-m) + self.g_t(-m) * (r + m)
        } else {
            p(r)
        }
    }

    pub fn alpha_p_t(&self, r: f64) -> f64 {
        self.c.a1 + self.c.a2 * trunc(r, self.m)
    }

    pub fn alpha_t(&self, r: f64) -> f64 {
        let a = |s: f64| self.c.a0 + self.c.a1 * s + 0.5 * self.c.a2 * s * s;
        let m = self.m;
        if r > m {
            a(m) + self.alpha_p_t(m) * (r - m)
        } else if r < -m {
            a(-m) + self.alpha_p_t(-m) * (r + m)
        } else {
            a(r)
        }
    }

    pub fn alpha0_t(&self, r: f64) -> f64 {
        let s = trunc(r, self.m);
        self.c.b0 + self.c.b1 * s + self.c.b2 * s * s
    }
}

fn field(grid: &Grid, v: Vec<f64>) -> ScalarField {
    ScalarField::from_values(grid, v).unwrap()
}

/// Reference θ-step functional.
pub struct RefThetaStep {
    pub grid: Grid,
    pub ops: DenseOps,
    pub mob: Vec<f64>,
    pub coef: Vec<f64>,
    pub theta0: Vec<f64>,
    pub v: Vec<f64>,
    pub tau: f64,
    pub nu: f64,
    pub eps: f64,
}

impl RefThetaStep {
    pub fn new(
        eta: &ScalarField,
        theta0: &ScalarField,
        v: &ScalarField,
        model: &RefModel,
        p: &SchemeParams,
    ) -> Self {
        let grid = *eta.grid();
        RefThetaStep {
            grid,
            ops: DenseOps::new(&grid),
            mob: eta.values().iter().map(|&r| model.alpha0_t(r)).collect(),
            coef: eta.values().iter().map(|&r| model.alpha_t(r)).collect(),
            theta0: theta0.values().to_vec(),
            v: v.values().to_vec(),
            tau: p.tau,
            nu: p.nu,
            eps: p.eps,
        }
    }
}

impl ConvexObjective for RefThetaStep {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn value(&self, z: &ScalarField) -> f64 {
        let z = z.values();
        let d: Vec<f64> = z.iter().zip(&self.theta0).map(|(a, b)| a - b).collect();
        let mass: f64 = d.iter().zip(&self.mob).map(|(x, w)| w * x * x).sum();
        let lin: f64 = z.iter().zip(&self.v).map(|(a, b)| a * b).sum();
        self.ops.vol * (mass / (2.0 * self.tau) + self.ops.tv(&self.coef, z, self.eps) - lin)
            + self.nu * self.nu / (2.0 * self.tau) * self.ops.dirichlet(&d)
    }

    fn gradient(&self, z: &ScalarField) -> ScalarField {
        let zv = z.values();
        let d: Vec<f64> = zv.iter().zip(&self.theta0).map(|(a, b)| a - b).collect();
        let lap = self.ops.apply_dt(&self.ops.apply_d(&d));
        let tv = self.ops.tv_grad(&self.coef, zv, self.eps);
        let g = (0..self.ops.n)
            .map(|i| {
                self.mob[i] * d[i] / self.tau + tv[i] + self.nu * self.nu / self.tau * lap[i]
                    - self.v[i]
            })
            .collect();
        field(&self.grid, g)
    }

    fn hessian_apply(&self, z: &ScalarField, d: &ScalarField) -> ScalarField {
        fd_hessian(self, z, d)
    }
}

/// Reference potential of the full nonlinear η-equation: its minimizer
/// solves the η-step directly, with no lagging of `g`.
pub struct RefEtaStep {
    pub grid: Grid,
    pub ops: DenseOps,
    pub model: RefModel,
    pub gamma: Vec<f64>,
    pub eta0: Vec<f64>,
    pub u: Vec<f64>,
    pub tau: f64,
    pub mu: f64,
}

impl RefEtaStep {
    pub fn new(
        eta0: &ScalarField,
        theta: &ScalarField,
        u: &ScalarField,
        model: &RefModel,
        p: &SchemeParams,
    ) -> Self {
        let grid = *eta0.grid();
        let ops = DenseOps::new(&grid);
        let gamma = ops
            .cell_vectors(theta.values())
            .iter()
            .map(|y| (p.eps * p.eps + y[0] * y[0] + y[1] * y[1]).sqrt())
            .collect();
        RefEtaStep {
            grid,
            ops,
            model: *model,
            gamma,
            eta0: eta0.values().to_vec(),
            u: u.values().to_vec(),
            tau: p.tau,
            mu: p.mu,
        }
    }
}

impl ConvexObjective for RefEtaStep {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn value(&self, z: &ScalarField) -> f64 {
        let z = z.values();
        let d: Vec<f64> = z.iter().zip(&self.eta0).map(|(a, b)| a - b).collect();
        let pointwise: f64 = (0..self.ops.n)
            .map(|i| {
                d[i] * d[i] / (2.0 * self.tau)
                    + self.model.big_g_t(z[i])
                    + self.model.alpha_t(z[i]) * self.gamma[i]
                    - self.u[i] * z[i]
            })
            .sum();
        self.ops.vol * pointwise
            + 0.5 * self.ops.dirichlet(z)
            + self.mu * self.mu / (2.0 * self.tau) * self.ops.dirichlet(&d)
    }

    fn gradient(&self, z: &ScalarField) -> ScalarField {
        let zv = z.values();
        let d: Vec<f64> = zv.iter().zip(&self.eta0).map(|(a, b)| a - b).collect();
        let lz = self.ops.apply_dt(&self.ops.apply_d(zv));
        let ld = self.ops.apply_dt(&self.ops.apply_d(&d));
        let g = (0..self.ops.n)
            .map(|i| {
                d[i] / self.tau
                    + lz[i]
                    + self.mu * self.mu / self.tau * ld[i]
                    + self.model.g_t(zv[i])
                    + self.model.alpha_p_t(zv[i]) * self.gamma[i]
                    - self.u[i]
            })
            .collect();
        field(&self.grid, g)
    }

    fn hessian_apply(&self, z: &ScalarField, d: &ScalarField) -> ScalarField {
        fd_hessian(self, z, d)
    }
}

fn fd_hessian(obj: &dyn ConvexObjective, z: &ScalarField, d: &ScalarField) -> ScalarField {
    let h = 1e-6;
    let mut a = z.clone();
    a.axpy(h, d);
    let mut b = z.clone();
    b.axpy(-h, d);
    obj.gradient(&a).sub(&obj.gradient(&b)).scale(0.5 / h)
}

pub fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    field(
        grid,
        (0..grid.num_cells())
            .map(|_| rng.gen_range(lo..hi))
            .collect(),
    )
}

/// A 1D grid of 4..=16 cells or a 2D grid with at most 16 cells.
pub fn random_small_grid(rng: &mut ChaCha8Rng) -> Grid {
    if rng.gen_bool(0.5) {
        Grid::line(rng.gen_range(4..=16), rng.gen_range(0.5..2.0)).unwrap()
    } else {
        let nx = rng.gen_range(2..=4);
        let ny = rng.gen_range(2..=4);
        Grid::new(
            2,
            &[nx, ny],
            &[rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)],
        )
        .unwrap()
    }
}
