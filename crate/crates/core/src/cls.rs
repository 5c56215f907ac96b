//! Conditional least squares estimation and the F-type statistic.
//!
//! With known intervention times and types, the conditional mean of the
//! contaminated model is linear in `(lambda, alpha_1..alpha_p, kappa_1..)`,
//! so the fit is ordinary least squares on the design
//! `[1, y_{t-1}, ..., y_{t-p}, delta_j^(t-tau_j) 1(t >= tau_j)]` over rows
//! `t = p+1..n`. The F-type statistic for one profile compares the residual
//! sums of squares with and without its column and is referred to the
//! chi-square(1) law.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::InterventionProfile;
use crate::series::CountSeries;

/// Condition-estimate threshold above which the normal-equation path hands
/// over to column-pivoted QR.
const COND_LIMIT: f64 = 1e10;

/// Result of a conditional least squares fit.
///
/// Estimates are the unconstrained minimizers: `alphas` may leave `[0, 1)`
/// and `lambda` or `kappas` may be negative; `out_of_region` records when
/// that happened.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClsFit {
    pub alphas: Vec<f64>,
    pub lambda: f64,
    pub kappas: Vec<f64>,
    pub rss: f64,
    /// Number of residual rows, `n - p`.
    pub n_effective: usize,
    pub out_of_region: bool,
}

fn column_names(p: usize, profiles: &[InterventionProfile]) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend((1..=p).map(|i| format!("lag-{i}")));
    names.extend(profiles.iter().map(|pr| format!("profile(tau={},delta={})", pr.tau, pr.delta)));
    names
}

/// Response vector and design matrix of the CLS problem (rows `t = p+1..n`).
pub fn build_cls_design(
    series: &CountSeries,
    p: usize,
    profiles: &[InterventionProfile],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = series.len();
    let k = 1 + p + profiles.len();
    if n <= p + 1 + profiles.len() {
        return Err(Error::Config(format!(
            "series of length {n} cannot identify {k} regression parameters at order {p}"
        )));
    }
    let rows = n - p;
    let y = series.values();
    let mut design = DMatrix::zeros(rows, k);
    let mut response = DVector::zeros(rows);
    for (r, t) in (p + 1..=n).enumerate() {
        response[r] = y[t - 1] as f64;
        design[(r, 0)] = 1.0;
        for i in 1..=p {
            design[(r, i)] = y[t - 1 - i] as f64;
        }
        for (j, profile) in profiles.iter().enumerate() {
            design[(r, 1 + p + j)] = profile.weight(t);
        }
    }
    Ok((response, design))
}

struct Solution {
    coef: DVector<f64>,
    rss: f64,
}

/// Normal equations with a QR fallback when the Gram matrix is
/// ill-conditioned; rank failures report the offending columns by name.
fn solve_ls(response: &DVector<f64>, design: &DMatrix<f64>, names: &[String]) -> Result<Solution> {
    let gram = design.transpose() * design;
    let rhs = design.transpose() * response;
    let coef = match Cholesky::new(gram) {
        Some(chol) => {
            let l = chol.l();
            let k = l.nrows();
            let (mut dmax, mut dmin) = (f64::MIN, f64::MAX);
            for i in 0..k {
                dmax = dmax.max(l[(i, i)]);
                dmin = dmin.min(l[(i, i)]);
            }
            let cond_est = (dmax / dmin).powi(2);
            if cond_est.is_finite() && cond_est <= COND_LIMIT {
                Some(chol.solve(&rhs))
            } else {
                None
            }
        }
        None => None,
    };
    let coef = match coef {
        Some(c) => c,
        None => qr_solve(response, design, names)?,
    };
    let resid = response - design * &coef;
    Ok(Solution { rss: resid.norm_squared(), coef })
}

fn qr_solve(
    response: &DVector<f64>,
    design: &DMatrix<f64>,
    names: &[String],
) -> Result<DVector<f64>> {
    let k = design.ncols();
    let qr = design.clone().col_piv_qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let tol = diag_max * design.nrows() as f64 * f64::EPSILON * 16.0;
    let deficient: Vec<usize> = (0..k).filter(|&i| r[(i, i)].abs() <= tol).collect();
    if !deficient.is_empty() || diag_max == 0.0 {
        // map pivoted positions back to the original column names
        let perm: Vec<usize> = {
            let mut idx = DVector::from_iterator(k, (0..k).map(|i| i as f64));
            qr.p().permute_rows(&mut idx);
            idx.iter().map(|&v| v as usize).collect()
        };
        let mut columns: Vec<String> =
            deficient.iter().map(|&i| names[perm[i]].clone()).collect();
        if columns.is_empty() {
            columns = names.to_vec();
        }
        return Err(Error::RankDeficient { columns });
    }
    qr_lstsq_from(&qr, response).ok_or_else(|| Error::RankDeficient { columns: names.to_vec() })
}

fn qr_lstsq_from(
    qr: &nalgebra::ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    response: &DVector<f64>,
) -> Option<DVector<f64>> {
    // thin-QR least squares: x = P (R^-1 Q' b)
    let qtb = qr.q().transpose() * response;
    let mut x = qr.r().solve_upper_triangular(&qtb)?;
    qr.p().inv_permute_rows(&mut x);
    Some(x)
}

/// Least-squares solve of an overdetermined system via column-pivoted QR.
/// Exposed for use as an independent oracle in tests.
pub fn qr_lstsq(design: &DMatrix<f64>, response: &DVector<f64>) -> Option<DVector<f64>> {
    qr_lstsq_from(&design.clone().col_piv_qr(), response)
}

/// Fit the contaminated INAR(p) model by conditional least squares.
pub fn fit_cls(series: &CountSeries, p: usize, profiles: &[InterventionProfile]) -> Result<ClsFit> {
    let (response, design) = build_cls_design(series, p, profiles)?;
    let names = column_names(p, profiles);
    let sol = solve_ls(&response, &design, &names)?;
    let lambda = sol.coef[0];
    let alphas: Vec<f64> = (0..p).map(|i| sol.coef[1 + i]).collect();
    let kappas: Vec<f64> = (0..profiles.len()).map(|j| sol.coef[1 + p + j]).collect();
    let out_of_region = alphas.iter().any(|a| !(0.0..1.0).contains(a))
        || alphas.iter().sum::<f64>() >= 1.0
        || lambda <= 0.0;
    Ok(ClsFit {
        alphas,
        lambda,
        kappas,
        rss: sol.rss,
        n_effective: series.len() - p,
        out_of_region,
    })
}

/// Precomputed null fit used to scan many `(tau, delta)` cells cheaply.
///
/// Adding one intervention column to the null design only borders the Gram
/// matrix, so each cell costs a handful of dot products instead of a full
/// refit; the resulting `RSS(1) = RSS(0) - kappa_hat^2 d` identity is exact
/// least-squares algebra, not an approximation.
pub struct FStatScan {
    y: Vec<f64>,
    p: usize,
    n: usize,
    chol: Cholesky<f64, nalgebra::Dyn>,
    beta0: DVector<f64>,
    rss0: f64,
    scale: f64,
}

/// One scanned cell: the F value, the alternative-fit kappa, and RSS(1).
#[derive(Debug, Clone, Copy)]
pub struct FCell {
    pub statistic: f64,
    pub kappa_hat: f64,
    pub rss1: f64,
}

impl FStatScan {
    pub fn new(series: &CountSeries, p: usize) -> Result<Self> {
        let (response, design) = build_cls_design(series, p, &[])?;
        let names = column_names(p, &[]);
        let gram = design.transpose() * &design;
        let scale = (0..gram.nrows()).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
        let chol =
            Cholesky::new(gram).ok_or_else(|| Error::RankDeficient { columns: names.clone() })?;
        let beta0 = chol.solve(&(design.transpose() * &response));
        let resid = &response - design * &beta0;
        let rss0 = resid.norm_squared();
        Ok(Self {
            y: series.values().iter().map(|&v| v as f64).collect(),
            p,
            n: series.len(),
            chol,
            beta0,
            rss0,
            scale,
        })
    }

    pub fn rss0(&self) -> f64 {
        self.rss0
    }

    /// Valid candidate times: the intervention column must have support in
    /// the residual window, so `p + 1 <= tau <= n`.
    pub fn tau_range(&self) -> (usize, usize) {
        (self.p + 1, self.n)
    }

    /// F statistic for a single profile. Errors on collinear columns (for
    /// example `delta = 1` at `tau = p + 1`, which duplicates the
    /// intercept); `RSS(1) = 0` yields an infinite statistic.
    pub fn cell(&self, profile: InterventionProfile) -> Result<FCell> {
        let (lo, hi) = self.tau_range();
        if profile.tau < lo || profile.tau > hi {
            return Err(Error::Domain(format!(
                "tested tau {} outside the valid range {lo}..={hi}",
                profile.tau
            )));
        }
        let df = self.n as f64 - self.p as f64 - 2.0;
        if df <= 0.0 {
            return Err(Error::Config("n - p - 2 degrees of freedom required".into()));
        }
        let k0 = 1 + self.p;
        // border vectors: g = X0' z, zy = z' y, zz = z' z
        let mut g = DVector::zeros(k0);
        let mut zy = 0.0;
        let mut zz = 0.0;
        for t in profile.tau..=self.n {
            let w = profile.weight(t);
            if w == 0.0 {
                break; // delta = 0 past tau
            }
            let yt = self.y[t - 1];
            g[0] += w;
            for i in 1..=self.p {
                g[i] += w * self.y[t - 1 - i];
            }
            zy += w * yt;
            zz += w * w;
        }
        let u = self.chol.solve(&g);
        let d = zz - g.dot(&u);
        // Schur complement ~ 0 means the profile column is collinear with
        // the null design
        if d <= 1e-12 * zz.max(self.scale) || !d.is_finite() {
            return Err(Error::RankDeficient {
                columns: vec![format!("profile(tau={},delta={})", profile.tau, profile.delta)],
            });
        }
        let kappa_hat = (zy - g.dot(&self.beta0)) / d;
        let rss1 = (self.rss0 - kappa_hat * kappa_hat * d).max(0.0);
        let statistic =
            if rss1 == 0.0 { f64::INFINITY } else { (self.rss0 - rss1) * df / rss1 };
        Ok(FCell { statistic, kappa_hat, rss1 })
    }
}

/// F-type statistic `(RSS(0) - RSS(1)) / (RSS(1) / (n - p - 2))` for a
/// single intervention profile.
pub fn f_statistic(series: &CountSeries, p: usize, tau: usize, delta: f64) -> Result<f64> {
    let scan = FStatScan::new(series, p)?;
    Ok(scan.cell(InterventionProfile::new(tau, delta)?)?.statistic)
}
