//! Conditional maximum likelihood fitting.
//!
//! The optimizer runs on transformed parameters so every likelihood
//! evaluation is feasible: the alpha block maps through a stick-breaking
//! logistic onto `{alpha_i > 0, sum < 1 - 1e-6}`, a constant lambda through
//! a log map, regression coefficients through the identity (the intercept
//! already lives on the log scale), and each kappa through a shifted log
//! whose lower bound keeps `min_t mu_t >= 1e-8` given the current mean.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cls::fit_cls;
use crate::error::Result;
use crate::model::{InterventionProfile, ALPHA_SUM_CAP};
use crate::series::CountSeries;

use super::information::expected_information;
use super::optim::minimize;
use super::{CmlProblem, MeanParams, MeanShape, ThetaVector};

const MU_FLOOR: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 500;

/// A conditional maximum likelihood fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmlFit {
    pub theta: ThetaVector,
    pub loglik: f64,
    /// Standard errors ordered as theta: from the inverse expected
    /// information for clean first-order constant-mean fits, from the
    /// inverse negative observed Hessian otherwise; absent when neither is
    /// numerically invertible.
    pub std_errors: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Transform {
    p: usize,
    constant: bool,
    mean_len: usize,
    j: usize,
}

struct ForwardState {
    theta: ThetaVector,
    sigmas: Vec<f64>,
    /// lambda_min over the likelihood window and the covariate row achieving
    /// it (identity row index for the constant case).
    lambda_min: f64,
    argmin_row: usize,
}

impl Transform {
    fn dim(&self) -> usize {
        self.p + self.mean_len + self.j
    }

    fn kappa_shift(&self, lambda_min: f64) -> f64 {
        (MU_FLOOR - lambda_min) / self.j.max(1) as f64
    }

    fn forward(&self, u: &DVector<f64>, problem: &CmlProblem) -> ForwardState {
        let mut alphas = Vec::with_capacity(self.p);
        let mut sigmas = Vec::with_capacity(self.p);
        let mut rem = ALPHA_SUM_CAP;
        for i in 0..self.p {
            let s = sigmoid(u[i]);
            sigmas.push(s);
            alphas.push(rem * s);
            rem *= 1.0 - s;
        }
        let mean = if self.constant {
            MeanParams::Lambda(u[self.p].exp())
        } else {
            MeanParams::Betas(u.as_slice()[self.p..self.p + self.mean_len].to_vec())
        };
        let probe = ThetaVector { alphas, mean, kappas: vec![0.0; self.j] };
        let (lambda_min, argmin_row) = self.lambda_min(&probe, problem);
        let shift = self.kappa_shift(lambda_min);
        let kappas: Vec<f64> =
            (0..self.j).map(|jj| u[self.p + self.mean_len + jj].exp() + shift).collect();
        ForwardState {
            theta: ThetaVector { kappas, ..probe },
            sigmas,
            lambda_min,
            argmin_row,
        }
    }

    fn lambda_min(&self, theta: &ThetaVector, problem: &CmlProblem) -> (f64, usize) {
        if self.constant {
            if let MeanParams::Lambda(l) = theta.mean {
                return (l, 0);
            }
        }
        let mut best = (f64::INFINITY, problem.p + 1);
        for t in problem.p + 1..=problem.series.len() {
            let l = problem.lambda_at(theta, t);
            if l < best.0 {
                best = (l, t);
            }
        }
        best
    }

    /// Pull the theta-space gradient back to u-space.
    fn chain(
        &self,
        state: &ForwardState,
        g_theta: &DVector<f64>,
        problem: &CmlProblem,
    ) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        // alpha block: d alpha_k / d u_i = -alpha_k sigma_i for i < k,
        // alpha_i (1 - sigma_i) on the diagonal
        for i in 0..self.p {
            let mut v = state.theta.alphas[i] * (1.0 - state.sigmas[i]) * g_theta[i];
            for k in i + 1..self.p {
                v -= state.sigmas[i] * state.theta.alphas[k] * g_theta[k];
            }
            g[i] = v;
        }
        let kappa_grad_sum: f64 =
            (0..self.j).map(|jj| g_theta[self.p + self.mean_len + jj]).sum();
        if self.constant {
            // lambda = exp(u); the kappa shift moves with lambda_min = lambda
            let lambda = state.lambda_min;
            g[self.p] = lambda * g_theta[self.p];
            if self.j > 0 {
                g[self.p] -= lambda / self.j as f64 * kappa_grad_sum;
            }
        } else {
            let row = if self.j > 0 {
                match problem.mean_shape {
                    MeanShape::LogLinear(cov) => Some(cov.row(state.argmin_row)),
                    MeanShape::Constant => None,
                }
            } else {
                None
            };
            for k in 0..self.mean_len {
                g[self.p + k] = g_theta[self.p + k];
                if let Some(row) = row {
                    g[self.p + k] -= row[k] * state.lambda_min / self.j as f64 * kappa_grad_sum;
                }
            }
        }
        let shift = self.kappa_shift(state.lambda_min);
        for jj in 0..self.j {
            let idx = self.p + self.mean_len + jj;
            g[idx] = (state.theta.kappas[jj] - shift) * g_theta[idx];
        }
        g
    }

    fn inverse(&self, theta: &ThetaVector, problem: &CmlProblem) -> DVector<f64> {
        let mut u = DVector::zeros(self.dim());
        let mut rem = ALPHA_SUM_CAP;
        for i in 0..self.p {
            let a = theta.alphas[i].clamp(1e-6 * rem, rem * (1.0 - 1e-6));
            u[i] = logit(a / rem);
            rem -= a;
        }
        match &theta.mean {
            MeanParams::Lambda(l) => u[self.p] = l.max(1e-8).ln(),
            MeanParams::Betas(b) => {
                for (k, v) in b.iter().enumerate() {
                    u[self.p + k] = *v;
                }
            }
        }
        if self.j > 0 {
            let (lambda_min, _) = self.lambda_min(theta, problem);
            let shift = self.kappa_shift(lambda_min);
            for (jj, kappa) in theta.kappas.iter().enumerate() {
                let excess = (kappa - shift).max(1e-4 * (1.0 + lambda_min));
                u[self.p + self.mean_len + jj] = excess.ln();
            }
        }
        u
    }
}

/// Starting point: CLS estimates clipped into the feasible region for
/// constant means; a log-scale regression of the counts for the log-linear
/// case.
fn start_theta(
    series: &CountSeries,
    p: usize,
    mean_shape: &MeanShape,
    profiles: &[InterventionProfile],
) -> ThetaVector {
    let j = profiles.len();
    match mean_shape {
        MeanShape::Constant => {
            let (mut alphas, lambda, kappas) = match fit_cls(series, p, profiles) {
                Ok(fit) => (fit.alphas, fit.lambda.max(1e-4), fit.kappas),
                Err(_) => {
                    let a = series.lag1_autocorr().clamp(0.0, 0.9);
                    let alphas = vec![(a / p.max(1) as f64).max(1e-4); p];
                    let lambda =
                        (series.sample_mean() * (1.0 - alphas.iter().sum::<f64>())).max(1e-4);
                    (alphas, lambda, vec![0.0; j])
                }
            };
            let mut used = 0.0f64;
            for a in alphas.iter_mut() {
                let hi = (0.99 * (1.0 - used)).max(2e-4);
                *a = a.clamp(1e-4, hi);
                used += *a;
            }
            let floor = MU_FLOOR - lambda;
            let kappas = kappas
                .iter()
                .map(|k| k.max(floor / j.max(1) as f64 + 1e-3 * (1.0 + lambda)))
                .collect();
            ThetaVector { alphas, mean: MeanParams::Lambda(lambda), kappas }
        }
        MeanShape::LogLinear(cov) => {
            let a0 = series.lag1_autocorr().clamp(1e-4, 0.9);
            let alphas = vec![(a0 / p.max(1) as f64).max(1e-4); p];
            // regress log(y + 0.5) on the covariates for a rough beta start
            let n = series.len();
            let rows = n - p;
            let mut x = nalgebra::DMatrix::zeros(rows, cov.ncols());
            let mut z = DVector::zeros(rows);
            for (r, t) in (p + 1..=n).enumerate() {
                for (k, v) in cov.row(t).iter().enumerate() {
                    x[(r, k)] = *v;
                }
                z[r] = (series.value_at(t) as f64 + 0.5).ln();
            }
            let mut betas = crate::cls::qr_lstsq(&x, &z)
                .map(|b| b.as_slice().to_vec())
                .unwrap_or_else(|| vec![0.0; cov.ncols()]);
            // shift a constant column, if present, from E[y] scale to
            // innovation scale
            for k in 0..cov.ncols() {
                let is_const =
                    (p + 1..=n).all(|t| (cov.row(t)[k] - 1.0).abs() < 1e-12);
                if is_const {
                    betas[k] += (1.0 - alphas.iter().sum::<f64>()).ln();
                    break;
                }
            }
            ThetaVector { alphas, mean: MeanParams::Betas(betas), kappas: vec![0.1; j] }
        }
    }
}

/// Fit the (contaminated) Poisson INAR(p) model by conditional maximum
/// likelihood. Non-convergence is reported through the `converged` flag,
/// not as an error.
pub fn fit_cml(
    series: &CountSeries,
    p: usize,
    mean_shape: &MeanShape,
    profiles: &[InterventionProfile],
) -> Result<CmlFit> {
    let problem = CmlProblem::new(series, p, mean_shape, profiles.to_vec())?;
    let transform = Transform {
        p,
        constant: mean_shape.is_constant(),
        mean_len: mean_shape.param_len(),
        j: profiles.len(),
    };
    let theta0 = start_theta(series, p, mean_shape, profiles);
    let u0 = transform.inverse(&theta0, &problem);

    let outcome = minimize(
        |u| {
            let state = transform.forward(u, &problem);
            let ll = problem.loglik(&state.theta).ok()?;
            let score = problem.score(&state.theta).ok()?;
            let g_u = transform.chain(&state, &score, &problem);
            Some((-ll, -g_u))
        },
        u0,
        MAX_ITER,
        GRAD_TOL,
    );

    let state = transform.forward(&outcome.x, &problem);
    let theta = state.theta;
    let loglik = match problem.loglik(&theta) {
        Ok(v) => v,
        Err(_) => {
            return Ok(CmlFit {
                theta,
                loglik: f64::NEG_INFINITY,
                std_errors: None,
                converged: false,
                iterations: outcome.iterations,
            })
        }
    };
    let std_errors = standard_errors(&problem, &theta);
    Ok(CmlFit {
        theta,
        loglik,
        std_errors,
        converged: outcome.converged,
        iterations: outcome.iterations,
    })
}

fn standard_errors(problem: &CmlProblem, theta: &ThetaVector) -> Option<Vec<f64>> {
    let expected = if problem.p == 1
        && problem.mean_shape.is_constant()
        && problem.profiles.is_empty()
    {
        expected_information(theta, problem.series.len(), &[], super::information::DEFAULT_TRUNCATION_TOL)
            .ok()
    } else {
        None
    };
    let info = match expected {
        Some(i) => i,
        None => -problem.hessian(theta).ok()?,
    };
    let inv = info.try_inverse()?;
    let ses: Vec<f64> = (0..inv.nrows()).map(|i| inv[(i, i)].max(0.0).sqrt()).collect();
    if ses.iter().all(|s| s.is_finite()) {
        Some(ses)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InarModel;
    use crate::rng::StreamKey;
    use crate::simulate::{simulate_clean, simulate_contaminated};

    #[test]
    fn recovers_iid_poisson_rate() {
        let model = InarModel::constant(vec![0.0], 3.0).unwrap();
        let s = simulate_clean(&model, 10_000, 10, StreamKey::new(31)).unwrap();
        let fit = fit_cml(&s, 1, &MeanShape::Constant, &[]).unwrap();
        assert!(fit.converged, "iterations {}", fit.iterations);
        let lambda = match fit.theta.mean {
            MeanParams::Lambda(l) => l,
            _ => unreachable!(),
        };
        let se = (3.0f64 / 10_000.0).sqrt();
        assert!((lambda - 3.0).abs() < 3.0 * se + 0.1, "lambda {lambda}");
        assert!(fit.theta.alphas[0] < 0.05);
    }

    #[test]
    fn recovers_strong_autocorrelation() {
        let model = InarModel::constant(vec![0.9], 2.0).unwrap();
        let s = simulate_clean(&model, 10_000, 500, StreamKey::new(37)).unwrap();
        let fit = fit_cml(&s, 1, &MeanShape::Constant, &[]).unwrap();
        assert!(fit.converged);
        assert!((fit.theta.alphas[0] - 0.9).abs() < 0.01, "alpha {}", fit.theta.alphas[0]);
    }

    #[test]
    fn loglik_not_below_start_point() {
        let model = InarModel::constant(vec![0.5], 3.0).unwrap();
        let s = simulate_clean(&model, 200, 500, StreamKey::new(41)).unwrap();
        let shape = MeanShape::Constant;
        let problem = CmlProblem::new(&s, 1, &shape, vec![]).unwrap();
        let theta0 = start_theta(&s, 1, &shape, &[]);
        let ll0 = problem.loglik(&theta0).unwrap();
        let fit = fit_cml(&s, 1, &shape, &[]).unwrap();
        assert!(fit.loglik >= ll0 - 1e-9, "{} < {ll0}", fit.loglik);
        assert!(fit.std_errors.is_some());
    }

    #[test]
    fn fits_intervention_size() {
        let model = InarModel::constant(vec![0.5], 3.0).unwrap();
        let iv = crate::model::Intervention::new(100, 0.9, 10.0).unwrap();
        let s = simulate_contaminated(&model, &[iv], 200, 500, StreamKey::new(43)).unwrap();
        let pr = InterventionProfile::new(100, 0.9).unwrap();
        let fit = fit_cml(&s, 1, &MeanShape::Constant, &[pr]).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.theta.kappas[0] - 10.0).abs() < 5.0,
            "kappa {}",
            fit.theta.kappas[0]
        );
    }

    #[test]
    fn transform_round_trip() {
        let s = CountSeries::new(vec![2, 3, 1, 4, 2, 5, 3, 2, 4, 1]).unwrap();
        let shape = MeanShape::Constant;
        let pr = InterventionProfile::new(5, 0.8).unwrap();
        let problem = CmlProblem::new(&s, 1, &shape, vec![pr]).unwrap();
        let tf = Transform { p: 1, constant: true, mean_len: 1, j: 1 };
        let theta = ThetaVector {
            alphas: vec![0.37],
            mean: MeanParams::Lambda(2.2),
            kappas: vec![1.4],
        };
        let u = tf.inverse(&theta, &problem);
        let back = tf.forward(&u, &problem).theta;
        assert!((back.alphas[0] - 0.37).abs() < 1e-10);
        if let MeanParams::Lambda(l) = back.mean {
            assert!((l - 2.2).abs() < 1e-10);
        }
        assert!((back.kappas[0] - 1.4).abs() < 1e-10);
    }

    #[test]
    fn transform_chain_matches_finite_differences() {
        let model = InarModel::constant(vec![0.4, 0.2], 2.0).unwrap();
        let s = simulate_clean(&model, 60, 200, StreamKey::new(53)).unwrap();
        let shape = MeanShape::Constant;
        let pr = InterventionProfile::new(30, 0.8).unwrap();
        let problem = CmlProblem::new(&s, 2, &shape, vec![pr]).unwrap();
        let tf = Transform { p: 2, constant: true, mean_len: 1, j: 1 };
        let u = DVector::from_vec(vec![-0.2, -0.9, 0.6, -0.5]);
        let state = tf.forward(&u, &problem);
        let score = problem.score(&state.theta).unwrap();
        let g = tf.chain(&state, &score, &problem);
        for k in 0..u.len() {
            let h = 1e-6;
            let mut up = u.clone();
            up[k] += h;
            let mut dn = u.clone();
            dn[k] -= h;
            let lu = problem.loglik(&tf.forward(&up, &problem).theta).unwrap();
            let ld = problem.loglik(&tf.forward(&dn, &problem).theta).unwrap();
            let fd = (lu - ld) / (2.0 * h);
            assert!(
                (g[k] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "component {k}: {} vs {fd}",
                g[k]
            );
        }
    }
}
