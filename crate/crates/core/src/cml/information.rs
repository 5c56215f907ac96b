//! Expected conditional information of the INAR(1) model under the null of
//! no intervention effects.
//!
//! The expectations of the negative Hessian are taken over the stationary
//! law, which for p = 1 with constant innovation mean is Poisson with mean
//! `lambda / (1 - alpha)`. The infinite sums over the lag and target counts
//! are truncated at the point where the Poisson tail drops below a
//! tolerance (1e-15 by default). Because the process is stationary under
//! the null, the three distinct inner sums do not depend on t; only the
//! intervention weight factors do, so each matrix costs one double sum.

use nalgebra::{DMatrix, DVector};

use crate::dist::poisson_tail_point;
use crate::error::{Error, Result};
use crate::model::InterventionProfile;

use super::transition::shifted_log_prob;
use super::{MeanParams, ThetaVector};

/// Default tail tolerance for the truncation point.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-15;

/// Condition-estimate threshold for declaring the matrix singular.
const COND_LIMIT: f64 = 1e12;

/// Expected conditional information at a null parameter vector
/// `(alpha, lambda, kappa = 0)` for an INAR(1) series of length `n` with
/// candidate intervention `profiles`. Returns the `(J+2) x (J+2)` matrix
/// ordered `(alpha, lambda, kappa_1..kappa_J)`.
pub fn expected_information(
    theta: &ThetaVector,
    n: usize,
    profiles: &[InterventionProfile],
    truncation_tol: f64,
) -> Result<DMatrix<f64>> {
    let (m_lag, m_innov) = truncation_points(theta, truncation_tol)?;
    expected_information_with_truncation(theta, n, profiles, m_lag, m_innov)
}

fn truncation_points(theta: &ThetaVector, tol: f64) -> Result<(u32, u32)> {
    let (alpha, lambda) = check_theta(theta)?;
    let marginal_mean = lambda / (1.0 - alpha);
    Ok((poisson_tail_point(marginal_mean, tol), poisson_tail_point(lambda, tol)))
}

fn check_theta(theta: &ThetaVector) -> Result<(f64, f64)> {
    if theta.alphas.len() != 1 {
        return Err(Error::Unsupported(
            "expected information is available for first-order models only".into(),
        ));
    }
    let lambda = match &theta.mean {
        MeanParams::Lambda(l) => *l,
        MeanParams::Betas(_) => {
            return Err(Error::Unsupported(
                "expected information requires a constant innovation mean".into(),
            ))
        }
    };
    if theta.kappas.iter().any(|k| *k != 0.0) {
        return Err(Error::Domain("expected information is evaluated at kappa = 0".into()));
    }
    let alpha = theta.alphas[0];
    if !((0.0..1.0).contains(&alpha) && lambda > 0.0) {
        return Err(Error::Domain(format!("infeasible null parameters ({alpha}, {lambda})")));
    }
    Ok((alpha, lambda))
}

/// Same as [`expected_information`] with explicit truncation points: the
/// lag sum runs over `0..=m_lag` and each target sum over
/// `0..=x + m_innov`. Exposed so stability under doubling the truncation
/// can be checked directly.
pub fn expected_information_with_truncation(
    theta: &ThetaVector,
    n: usize,
    profiles: &[InterventionProfile],
    m_lag: u32,
    m_innov: u32,
) -> Result<DMatrix<f64>> {
    if theta.kappas.len() != profiles.len() {
        return Err(Error::Domain("kappa block does not match the profile list".into()));
    }
    let kernel = NullKernel::compute(theta, m_lag, m_innov)?;
    let info = kernel.assemble(n, profiles)?;
    check_condition(&info)?;
    Ok(info)
}

/// The time-invariant inner sums of the expected information under the
/// null. Computing them once lets a scan over many `(tau, delta)` cells
/// reuse the expensive double sum.
pub(crate) struct NullKernel {
    /// E over one stationary transition of the d^2/d mean^2 bracket.
    a_sum: f64,
    /// E of the alpha-mean cross bracket (including the 1/(1-alpha)).
    b_sum: f64,
    /// E of the alpha-alpha bracket (including the 1/(1-alpha)^2).
    c_sum: f64,
}

impl NullKernel {
    pub fn from_theta(theta: &ThetaVector, tol: f64) -> Result<Self> {
        let (alpha, lambda) = check_theta(theta)?;
        let marginal_mean = lambda / (1.0 - alpha);
        Self::compute_checked(alpha, lambda, poisson_tail_point(marginal_mean, tol), poisson_tail_point(lambda, tol))
    }

    pub fn compute(theta: &ThetaVector, m_lag: u32, m_innov: u32) -> Result<Self> {
        let (alpha, lambda) = check_theta(theta)?;
        Self::compute_checked(alpha, lambda, m_lag, m_innov)
    }

    fn compute_checked(alpha: f64, lambda: f64, m_lag: u32, m_innov: u32) -> Result<Self> {
        let alphas = [alpha];
        let marginal_mean = lambda / (1.0 - alpha);
        let mut a_sum = 0.0;
        let mut b_sum = 0.0;
        let mut c_sum = 0.0;
        // marginal pmf by recursion
        let mut px = (-marginal_mean).exp();
        for x in 0..=m_lag {
            if x > 0 {
                px *= marginal_mean / x as f64;
            }
            if px == 0.0 {
                continue;
            }
            let xi = x as i64;
            let xf = x as f64;
            let y_max = x + m_innov;
            for y in 0..=y_max {
                let yi = y as i64;
                let lp0 = shifted_log_prob(yi, &[xi], &alphas, lambda);
                let p0 = lp0.exp();
                let lp_m1 = shifted_log_prob(yi - 1, &[xi], &alphas, lambda);
                let p_m2 = shifted_log_prob(yi - 2, &[xi], &alphas, lambda).exp();
                // ratio terms via exponent differences, avoiding 0/0
                let sq = |lp_num: f64| {
                    if lp_num == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (2.0 * lp_num - lp0).exp()
                    }
                };
                a_sum += px * (p_m2 - sq(lp_m1));
                if x > 0 {
                    let lp_q = shifted_log_prob(yi - 1, &[xi - 1], &alphas, lambda);
                    let p_q = lp_q.exp();
                    let p_r = shifted_log_prob(yi - 2, &[xi - 1], &alphas, lambda).exp();
                    let p_s = shifted_log_prob(yi - 2, &[xi - 2], &alphas, lambda).exp();
                    let cross = if lp_q == f64::NEG_INFINITY || lp_m1 == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (lp_m1 + lp_q - lp0).exp()
                    };
                    b_sum += px * xf * (p_r - cross);
                    c_sum += px * xf * (2.0 * p_q - p0 + (xf - 1.0) * p_s - xf * sq(lp_q));
                }
            }
        }
        Ok(Self {
            a_sum,
            b_sum: b_sum / (1.0 - alpha),
            c_sum: c_sum / (1.0 - alpha).powi(2),
        })
    }

    /// Assemble the `(J+2) x (J+2)` information for a series of length `n`
    /// and the given profiles; no conditioning check.
    pub fn assemble(&self, n: usize, profiles: &[InterventionProfile]) -> Result<DMatrix<f64>> {
        if n < 2 {
            return Err(Error::Config("need n >= 2 transitions".into()));
        }
        for pr in profiles {
            if pr.tau == 0 || pr.tau > n {
                return Err(Error::Config(format!("profile tau {} outside 1..={n}", pr.tau)));
            }
        }
        let j = profiles.len();
        let dim = 2 + j;
        let nt = (n - 1) as f64;
        let mut info = DMatrix::zeros(dim, dim);
        info[(0, 0)] = -nt * self.c_sum;
        info[(0, 1)] = -nt * self.b_sum;
        info[(1, 0)] = info[(0, 1)];
        info[(1, 1)] = -nt * self.a_sum;
        for (jj, pr) in profiles.iter().enumerate() {
            let s1: f64 = (2..=n).map(|t| pr.weight(t)).sum();
            info[(0, 2 + jj)] = -s1 * self.b_sum;
            info[(2 + jj, 0)] = info[(0, 2 + jj)];
            info[(1, 2 + jj)] = -s1 * self.a_sum;
            info[(2 + jj, 1)] = info[(1, 2 + jj)];
            for (ss, pr2) in profiles.iter().enumerate().skip(jj) {
                let s2: f64 = (2..=n).map(|t| pr.weight(t) * pr2.weight(t)).sum();
                info[(2 + jj, 2 + ss)] = -s2 * self.a_sum;
                info[(2 + ss, 2 + jj)] = info[(2 + jj, 2 + ss)];
            }
        }
        Ok(info)
    }
}

/// Positive-definiteness and conditioning gate shared by the score path.
pub(crate) fn check_condition(info: &DMatrix<f64>) -> Result<()> {
    let eig = info.clone().symmetric_eigen();
    let max_e = eig.eigenvalues.amax();
    let min_e = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if min_e > 0.0 { max_e / min_e } else { f64::INFINITY };
    if !(min_e > 0.0) || cond > COND_LIMIT {
        return Err(Error::SingularInformation { cond });
    }
    Ok(())
}

/// Solve `I x = v` for the quadratic form of the score statistic.
pub(crate) fn solve_information(info: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_condition(info)?;
    let chol = info.clone().cholesky().ok_or(Error::SingularInformation { cond: f64::INFINITY })?;
    Ok(chol.solve(v))
}
