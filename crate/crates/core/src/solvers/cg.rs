use crate::grid::ScalarField;

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient for an SPD operator, started
/// from zero. Stops once `|r| <= rel_tol |b|`.
pub fn conjugate_gradient(
    apply: impl Fn(&ScalarField) -> ScalarField,
    diagonal: &ScalarField,
    rhs: &ScalarField,
    rel_tol: f64,
    max_iters: usize,
) -> (ScalarField, CgOutcome) {
    let grid = *rhs.grid();
    let n = rhs.len();
    let b = rhs.values();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        let out = ScalarField::from_values(&grid, x).expect("sized from rhs");
        return (
            out,
            CgOutcome {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let inv_diag: Vec<f64> = diagonal
        .values()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iters {
        let pf = ScalarField::from_values(&grid, p.clone()).expect("sized from rhs");
        let ap = apply(&pf);
        let pap = dot(&p, ap.values());
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap.values()[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= rel_tol {
            let out = ScalarField::from_values(&grid, x).expect("sized from rhs");
            return (
                out,
                CgOutcome {
                    iterations: it + 1,
                    relative_residual: rel,
                    converged: true,
                },
            );
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let out = ScalarField::from_values(&grid, x).expect("sized from rhs");
    (
        out,
        CgOutcome {
            iterations: max_iters,
            relative_residual: rel,
            converged: false,
        },
    )
}
