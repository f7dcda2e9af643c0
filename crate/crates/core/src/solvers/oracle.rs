use super::ConvexObjective;
use crate::error::{KwcError, Result};
use crate::grid::{inner_h_unchecked, norm_h, ScalarField};

const MAX_CELLS: usize = 64;
const MAX_ITERS: usize = 1_000_000;

/// Naive reference minimizer for tests: steepest descent with an exact line
/// search along `-∇f`. The line search brackets and bisects the directional
/// derivative, so it keeps working once value differences sink below
/// round-off. Shares nothing with [`super::newton_minimize`].
pub fn oracle_minimize_dense(
    obj: &dyn ConvexObjective,
    init: &ScalarField,
    tol: f64,
) -> Result<ScalarField> {
    if init.len() > MAX_CELLS {
        return Err(KwcError::Oracle(format!(
            "oracle limited to {MAX_CELLS} cells, got {}",
            init.len()
        )));
    }
    if !obj.value(init).is_finite() {
        return Err(KwcError::Oracle(
            "objective is not finite at the initial point".into(),
        ));
    }
    let mut z = init.clone();
    let mut t_guess = 1e-3;
    for _ in 0..MAX_ITERS {
        let g = obj.gradient(&z);
        let gn = norm_h(&g);
        if !gn.is_finite() {
            return Err(KwcError::Oracle("non-finite gradient".into()));
        }
        if gn <= tol {
            return Ok(z);
        }
        // φ'(t) = -⟨∇f(z - t g), g⟩, increasing in t for convex f
        let dphi = |t: f64| {
            let mut p = z.clone();
            p.axpy(-t, &g);
            -inner_h_unchecked(&obj.gradient(&p), &g)
        };
        let mut lo = 0.0;
        let mut hi = t_guess;
        let mut grow = 0;
        while dphi(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 200 {
                return Err(KwcError::Oracle("line search is unbounded".into()));
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if dphi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-10 * hi {
                break;
            }
        }
        let t = 0.5 * (lo + hi);
        z.axpy(-t, &g);
        t_guess = 2.0 * t;
    }
    Err(KwcError::Oracle(format!(
        "no convergence within {MAX_ITERS} iterations"
    )))
}
