//! Conditional maximum likelihood for the (contaminated) Poisson INAR(p)
//! model: exact transition probabilities, the conditional log-likelihood,
//! analytic score and Hessian, the expected conditional information with
//! tail truncation, quasi-Newton fitting, and the score test statistic.

mod fit;
mod information;
mod optim;
mod score_test;
mod transition;

pub use fit::{fit_cml, CmlFit};
pub use information::{expected_information, expected_information_with_truncation};
pub use score_test::{score_statistic, ScoreScan};
pub use transition::transition_log_prob;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovariateMatrix, InterventionProfile};
use crate::series::CountSeries;
use transition::shifted_log_prob;

/// Shape of the innovation mean: a single free rate, or a log-linear
/// regression on a fixed covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanShape {
    Constant,
    LogLinear(CovariateMatrix),
}

impl MeanShape {
    pub fn param_len(&self) -> usize {
        match self {
            MeanShape::Constant => 1,
            MeanShape::LogLinear(c) => c.ncols(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MeanShape::Constant)
    }
}

/// Innovation-mean parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanParams {
    Lambda(f64),
    Betas(Vec<f64>),
}

/// Ordered parameter vector `theta = (alpha_1..alpha_p, lambda | beta,
/// kappa_1..kappa_J)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub alphas: Vec<f64>,
    pub mean: MeanParams,
    pub kappas: Vec<f64>,
}

impl ThetaVector {
    pub fn dim(&self) -> usize {
        self.alphas.len() + self.mean_len() + self.kappas.len()
    }

    pub fn mean_len(&self) -> usize {
        match &self.mean {
            MeanParams::Lambda(_) => 1,
            MeanParams::Betas(b) => b.len(),
        }
    }

    pub fn flatten(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.alphas);
        match &self.mean {
            MeanParams::Lambda(l) => v.push(*l),
            MeanParams::Betas(b) => v.extend_from_slice(b),
        }
        v.extend_from_slice(&self.kappas);
        DVector::from_vec(v)
    }

    pub fn from_flat(flat: &DVector<f64>, p: usize, mean_len: usize, constant: bool) -> Self {
        let alphas = flat.as_slice()[..p].to_vec();
        let mean = if constant {
            MeanParams::Lambda(flat[p])
        } else {
            MeanParams::Betas(flat.as_slice()[p..p + mean_len].to_vec())
        };
        let kappas = flat.as_slice()[p + mean_len..].to_vec();
        ThetaVector { alphas, mean, kappas }
    }
}

/// A fully specified conditional-likelihood problem: data, order, mean
/// shape, and the `(tau, delta)` profiles whose sizes sit in the kappa
/// block of theta.
pub struct CmlProblem<'a> {
    pub series: &'a CountSeries,
    pub p: usize,
    pub mean_shape: &'a MeanShape,
    pub profiles: Vec<InterventionProfile>,
}

impl<'a> CmlProblem<'a> {
    pub fn new(
        series: &'a CountSeries,
        p: usize,
        mean_shape: &'a MeanShape,
        profiles: Vec<InterventionProfile>,
    ) -> Result<Self> {
        if series.len() <= p {
            return Err(Error::Config(format!(
                "series of length {} has no transitions at order {p}",
                series.len()
            )));
        }
        if let MeanShape::LogLinear(cov) = mean_shape {
            if cov.nrows() < series.len() {
                return Err(Error::Config(format!(
                    "{} covariate rows for a series of length {}",
                    cov.nrows(),
                    series.len()
                )));
            }
        }
        for pr in &profiles {
            if pr.tau == 0 || pr.tau > series.len() {
                return Err(Error::Config(format!("profile tau {} outside the series", pr.tau)));
            }
        }
        Ok(Self { series, p, mean_shape, profiles })
    }

    pub fn dim(&self) -> usize {
        self.p + self.mean_shape.param_len() + self.profiles.len()
    }

    /// Innovation mean `lambda_t` (no intervention terms) at 1-based `t`.
    pub fn lambda_at(&self, theta: &ThetaVector, t: usize) -> f64 {
        match (&theta.mean, self.mean_shape) {
            (MeanParams::Lambda(l), _) => *l,
            (MeanParams::Betas(b), MeanShape::LogLinear(cov)) => {
                let row = cov.row(t);
                row.iter().zip(b).map(|(x, c)| x * c).sum::<f64>().exp()
            }
            (MeanParams::Betas(_), MeanShape::Constant) => f64::NAN,
        }
    }

    /// Full innovation mean `mu_t = lambda_t + sum_j kappa_j w_j(t)`.
    pub fn mu_at(&self, theta: &ThetaVector, t: usize) -> f64 {
        let mut mu = self.lambda_at(theta, t);
        for (j, pr) in self.profiles.iter().enumerate() {
            mu += theta.kappas[j] * pr.weight(t);
        }
        mu
    }

    /// Checks likelihood feasibility of theta for this problem; the error
    /// carries the offending time.
    pub fn check_feasible(&self, theta: &ThetaVector) -> Result<()> {
        if theta.alphas.len() != self.p
            || theta.mean_len() != self.mean_shape.param_len()
            || theta.kappas.len() != self.profiles.len()
        {
            return Err(Error::Domain("theta block sizes do not match the problem".into()));
        }
        for a in &theta.alphas {
            if !(a.is_finite() && (0.0..1.0).contains(a)) {
                return Err(Error::Domain(format!("alpha {a} outside [0, 1)")));
            }
        }
        if theta.alphas.iter().sum::<f64>() >= 1.0 {
            return Err(Error::Domain("thinning probabilities sum to >= 1".into()));
        }
        for t in self.p + 1..=self.series.len() {
            let mu = self.mu_at(theta, t);
            if !(mu.is_finite() && mu > 0.0) {
                return Err(Error::Domain(format!("innovation mean {mu} at t = {t}")));
            }
        }
        Ok(())
    }

    fn lags_at(&self, t: usize) -> Vec<i64> {
        (1..=self.p).map(|i| self.series.value_at(t - i) as i64).collect()
    }

    /// Conditional log-likelihood `sum_t log p(y_t | past)`, `t = p+1..n`.
    pub fn loglik(&self, theta: &ThetaVector) -> Result<f64> {
        self.check_feasible(theta)?;
        let mut ll = 0.0;
        for t in self.p + 1..=self.series.len() {
            let lags = self.lags_at(t);
            let mu = self.mu_at(theta, t);
            ll += shifted_log_prob(self.series.value_at(t) as i64, &lags, &theta.alphas, mu);
        }
        if !ll.is_finite() {
            return Err(Error::Domain("log-likelihood is not finite".into()));
        }
        Ok(ll)
    }

    /// Analytic score vector, ordered as theta.
    pub fn score(&self, theta: &ThetaVector) -> Result<DVector<f64>> {
        Ok(self.derivatives(theta, false)?.score)
    }

    /// Analytic Hessian matrix, ordered as theta. Symmetric by construction.
    pub fn hessian(&self, theta: &ThetaVector) -> Result<DMatrix<f64>> {
        Ok(self.derivatives(theta, true)?.hessian.expect("hessian requested"))
    }

    /// Score and optionally Hessian in one pass; the shifted transition
    /// probabilities at each t are computed once and shared between the two.
    pub fn derivatives(&self, theta: &ThetaVector, with_hessian: bool) -> Result<Derivatives> {
        self.check_feasible(theta)?;
        let p = self.p;
        let d = self.dim();
        let mlen = self.mean_shape.param_len();
        let idx_mean = p;
        let idx_kappa = p + mlen;
        let mut score = DVector::zeros(d);
        let mut hess = if with_hessian { Some(DMatrix::zeros(d, d)) } else { None };

        for t in p + 1..=self.series.len() {
            let y = self.series.value_at(t) as i64;
            let lags = self.lags_at(t);
            let mu = self.mu_at(theta, t);
            let alphas = &theta.alphas;
            let log_p0 = shifted_log_prob(y, &lags, alphas, mu);
            let ratio = |target: i64, shifted: &[i64]| -> f64 {
                let lp = shifted_log_prob(target, shifted, alphas, mu);
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    (lp - log_p0).exp()
                }
            };

            let r_m1 = ratio(y - 1, &lags);
            let d1 = r_m1 - 1.0;
            // q_i = p(y-1 | ..., lag_i - 1, ...) / p0
            let mut q = vec![0.0; p];
            for i in 0..p {
                let mut sh = lags.clone();
                sh[i] -= 1;
                q[i] = ratio(y - 1, &sh);
            }

            for i in 0..p {
                score[i] += lags[i] as f64 * (q[i] - 1.0) / (1.0 - alphas[i]);
            }
            let lambda_t = self.lambda_at(theta, t);
            match self.mean_shape {
                MeanShape::Constant => score[idx_mean] += d1,
                MeanShape::LogLinear(cov) => {
                    for (k, x) in cov.row(t).iter().enumerate() {
                        score[idx_mean + k] += x * lambda_t * d1;
                    }
                }
            }
            for (j, pr) in self.profiles.iter().enumerate() {
                score[idx_kappa + j] += pr.weight(t) * d1;
            }

            let Some(h) = hess.as_mut() else { continue };

            let r_m2 = ratio(y - 2, &lags);
            let d2 = r_m2 - r_m1 * r_m1;
            // alpha-mean cross bracket per lag
            let mut cross = vec![0.0; p];
            for i in 0..p {
                let mut sh = lags.clone();
                sh[i] -= 1;
                let r_qi = ratio(y - 2, &sh);
                cross[i] = lags[i] as f64 / (1.0 - alphas[i]) * (r_qi - r_m1 * q[i]);
            }
            for i in 0..p {
                let yi = lags[i] as f64;
                let mut sh = lags.clone();
                sh[i] -= 2;
                let s_ii = ratio(y - 2, &sh);
                h[(i, i)] += yi / (1.0 - alphas[i]).powi(2)
                    * (2.0 * q[i] - 1.0 + (yi - 1.0) * s_ii - yi * q[i] * q[i]);
                for j in i + 1..p {
                    let mut sh2 = lags.clone();
                    sh2[i] -= 1;
                    sh2[j] -= 1;
                    let s_ij = ratio(y - 2, &sh2);
                    let v = yi * lags[j] as f64 / ((1.0 - alphas[i]) * (1.0 - alphas[j]))
                        * (s_ij - q[i] * q[j]);
                    h[(i, j)] += v;
                    h[(j, i)] += v;
                }
            }
            match self.mean_shape {
                MeanShape::Constant => {
                    h[(idx_mean, idx_mean)] += d2;
                    for i in 0..p {
                        h[(i, idx_mean)] += cross[i];
                        h[(idx_mean, i)] += cross[i];
                    }
                    for (j, pr) in self.profiles.iter().enumerate() {
                        let w = pr.weight(t);
                        if w != 0.0 {
                            h[(idx_mean, idx_kappa + j)] += w * d2;
                            h[(idx_kappa + j, idx_mean)] += w * d2;
                        }
                    }
                }
                MeanShape::LogLinear(cov) => {
                    let row = cov.row(t);
                    for k in 0..mlen {
                        for l in k..mlen {
                            let v = row[k] * row[l] * (lambda_t * lambda_t * d2 + lambda_t * d1);
                            h[(idx_mean + k, idx_mean + l)] += v;
                            if l != k {
                                h[(idx_mean + l, idx_mean + k)] += v;
                            }
                        }
                        for i in 0..p {
                            let v = row[k] * lambda_t * cross[i];
                            h[(i, idx_mean + k)] += v;
                            h[(idx_mean + k, i)] += v;
                        }
                        for (j, pr) in self.profiles.iter().enumerate() {
                            let w = pr.weight(t);
                            if w != 0.0 {
                                let v = row[k] * lambda_t * w * d2;
                                h[(idx_mean + k, idx_kappa + j)] += v;
                                h[(idx_kappa + j, idx_mean + k)] += v;
                            }
                        }
                    }
                }
            }
            for (j, pr) in self.profiles.iter().enumerate() {
                let wj = pr.weight(t);
                if wj == 0.0 {
                    continue;
                }
                for (s, pr2) in self.profiles.iter().enumerate().skip(j) {
                    let v = wj * pr2.weight(t) * d2;
                    h[(idx_kappa + j, idx_kappa + s)] += v;
                    if s != j {
                        h[(idx_kappa + s, idx_kappa + j)] += v;
                    }
                }
                for i in 0..p {
                    let v = wj * cross[i];
                    h[(i, idx_kappa + j)] += v;
                    h[(idx_kappa + j, i)] += v;
                }
            }
        }

        Ok(Derivatives { score, hessian: hess })
    }
}

/// Output of [`CmlProblem::derivatives`].
pub struct Derivatives {
    pub score: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

/// Conditional log-likelihood of the contaminated model (free-function form).
pub fn conditional_loglik(
    theta: &ThetaVector,
    series: &CountSeries,
    p: usize,
    mean_shape: &MeanShape,
    profiles: &[InterventionProfile],
) -> Result<f64> {
    CmlProblem::new(series, p, mean_shape, profiles.to_vec())?.loglik(theta)
}

/// Analytic score vector of length `p + mean_len + J`.
pub fn score_vector(
    theta: &ThetaVector,
    series: &CountSeries,
    p: usize,
    mean_shape: &MeanShape,
    profiles: &[InterventionProfile],
) -> Result<DVector<f64>> {
    CmlProblem::new(series, p, mean_shape, profiles.to_vec())?.score(theta)
}

/// Analytic Hessian of the conditional log-likelihood.
pub fn hessian_matrix(
    theta: &ThetaVector,
    series: &CountSeries,
    p: usize,
    mean_shape: &MeanShape,
    profiles: &[InterventionProfile],
) -> Result<DMatrix<f64>> {
    CmlProblem::new(series, p, mean_shape, profiles.to_vec())?.hessian(theta)
}
