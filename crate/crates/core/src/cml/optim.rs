//! Dense BFGS minimizer with backtracking line search.
//!
//! Built for the small (<= ~10 parameter) transformed CML problems in this
//! crate: unconstrained, monotone (Armijo) on the objective, terminating on
//! the gradient sup-norm.

use nalgebra::{DMatrix, DVector};

pub struct OptimOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimize `f` starting at `x0`. `eval` returns `(value, gradient)` or
/// `None` if the point is not evaluable (treated as +inf by the line
/// search). Convergence: `sup-norm(gradient) < tol`.
pub fn minimize<F>(mut eval: F, x0: DVector<f64>, max_iter: usize, tol: f64) -> OptimOutcome
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut gx) = match eval(&x) {
        Some(v) => v,
        None => {
            return OptimOutcome {
                value: f64::INFINITY,
                grad: DVector::zeros(n),
                x,
                converged: false,
                iterations: 0,
            }
        }
    };
    let mut h_inv = DMatrix::identity(n, n);
    let mut iterations = 0;

    for _ in 0..max_iter {
        if gx.amax() < tol {
            return OptimOutcome { x, value: fx, grad: gx, converged: true, iterations };
        }
        iterations += 1;

        let mut dir = -(&h_inv * &gx);
        let mut slope = dir.dot(&gx);
        if !(slope < 0.0) || !slope.is_finite() {
            // not a descent direction; restart from steepest descent
            h_inv = DMatrix::identity(n, n);
            dir = -gx.clone();
            slope = dir.dot(&gx);
            if slope == 0.0 {
                return OptimOutcome { x, value: fx, grad: gx, converged: true, iterations };
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &x + &dir * step;
            if let Some((fc, gc)) = eval(&cand) {
                if fc.is_finite() && fc <= fx + ARMIJO_C1 * step * slope {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // line search failed; gradient is as small as we can make it
            return OptimOutcome { x, value: fx, grad: gx, converged: false, iterations };
        };

        let s = &x_new - &x;
        let yv = &g_new - &gx;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() && sy.is_finite() {
            // BFGS inverse update
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            let s_mat = &s * s.transpose();
            let hy_s = &hy * s.transpose();
            h_inv = &h_inv + s_mat * (rho * (1.0 + rho * yhy)) - (&hy_s + hy_s.transpose()) * rho;
        }

        x = x_new;
        fx = f_new;
        gx = g_new;
    }

    let converged = gx.amax() < tol;
    OptimOutcome { x, value: fx, grad: gx, converged, iterations }
}
