use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cap used for the open stationarity region `sum(alpha) < 1`.
pub const ALPHA_SUM_CAP: f64 = 1.0 - 1e-6;

/// Dense covariate matrix with one row per time point (row `t - 1` belongs
/// to time `t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    data: Vec<f64>,
    ncols: usize,
}

impl CovariateMatrix {
    pub fn new(data: Vec<f64>, ncols: usize) -> Result<Self> {
        if ncols == 0 || data.len() % ncols != 0 {
            return Err(Error::Config(format!(
                "covariate matrix with {} values cannot have {} columns",
                data.len(),
                ncols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("covariate matrix contains non-finite values".into()));
        }
        Ok(Self { data, ncols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Config("covariate rows have unequal lengths".into()));
        }
        Self::new(rows.concat(), ncols)
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.ncols
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Row for 1-based time `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        let i = t - 1;
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }
}

/// Innovation mean specification: a constant rate or a log-linear regression
/// `lambda_t = exp(x_t' beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanSpec {
    Constant(f64),
    LogLinear { betas: Vec<f64>, covariates: CovariateMatrix },
}

impl MeanSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MeanSpec::Constant(lambda) => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
                }
            }
            MeanSpec::LogLinear { betas, covariates } => {
                if betas.len() != covariates.ncols() {
                    return Err(Error::Config(format!(
                        "{} coefficients for {} covariate columns",
                        betas.len(),
                        covariates.ncols()
                    )));
                }
                if betas.iter().any(|b| !b.is_finite()) {
                    return Err(Error::Domain("non-finite regression coefficient".into()));
                }
            }
        }
        Ok(())
    }

    /// Innovation mean at 1-based time `t`.
    pub fn mean_at(&self, t: usize) -> f64 {
        match self {
            MeanSpec::Constant(lambda) => *lambda,
            MeanSpec::LogLinear { betas, covariates } => {
                let row = covariates.row(t);
                let lin: f64 = row.iter().zip(betas).map(|(x, b)| x * b).sum();
                lin.exp()
            }
        }
    }

    /// Number of rows the spec can serve (`usize::MAX` for a constant mean).
    pub fn max_time(&self) -> usize {
        match self {
            MeanSpec::Constant(_) => usize::MAX,
            MeanSpec::LogLinear { covariates, .. } => covariates.nrows(),
        }
    }
}

/// A Poisson INAR(p) model: thinning probabilities plus an innovation mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InarModel {
    alphas: Vec<f64>,
    mean: MeanSpec,
}

impl InarModel {
    pub fn new(alphas: Vec<f64>, mean: MeanSpec) -> Result<Self> {
        for a in &alphas {
            if !(a.is_finite() && (0.0..1.0).contains(a)) {
                return Err(Error::Domain(format!("thinning probability {a} outside [0, 1)")));
            }
        }
        let sum: f64 = alphas.iter().sum();
        if sum >= 1.0 {
            return Err(Error::Domain(format!(
                "thinning probabilities sum to {sum}, breaking stationarity"
            )));
        }
        mean.validate()?;
        Ok(Self { alphas, mean })
    }

    pub fn constant(alphas: Vec<f64>, lambda: f64) -> Result<Self> {
        Self::new(alphas, MeanSpec::Constant(lambda))
    }

    pub fn order(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn mean(&self) -> &MeanSpec {
        &self.mean
    }
}

/// The `(tau, delta)` part of an intervention: when it starts and how its
/// innovation-mean effect decays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionProfile {
    /// Onset time, 1-based.
    pub tau: usize,
    /// Decay rate in [0, 1]: 0 = innovation outlier, 1 = level shift.
    pub delta: f64,
}

impl InterventionProfile {
    pub fn new(tau: usize, delta: f64) -> Result<Self> {
        if tau == 0 {
            return Err(Error::Domain("intervention time tau must be >= 1".into()));
        }
        if !(delta.is_finite() && (0.0..=1.0).contains(&delta)) {
            return Err(Error::Domain(format!("delta {delta} outside [0, 1]")));
        }
        Ok(Self { tau, delta })
    }

    /// `delta^(t - tau) * 1(t >= tau)` with the convention `0^0 = 1`, so a
    /// `delta = 0` profile acts exactly once, at `t = tau`.
    pub fn weight(&self, t: usize) -> f64 {
        if t < self.tau {
            0.0
        } else if t == self.tau {
            1.0
        } else {
            self.delta.powi((t - self.tau) as i32)
        }
    }
}

/// One intervention effect `(tau, delta, kappa)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub tau: usize,
    pub delta: f64,
    pub kappa: f64,
}

impl Intervention {
    pub fn new(tau: usize, delta: f64, kappa: f64) -> Result<Self> {
        InterventionProfile::new(tau, delta)?;
        if !kappa.is_finite() {
            return Err(Error::Domain("kappa must be finite".into()));
        }
        Ok(Self { tau, delta, kappa })
    }

    pub fn profile(&self) -> InterventionProfile {
        InterventionProfile { tau: self.tau, delta: self.delta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_invariants() {
        assert!(InarModel::constant(vec![0.3], 5.0).is_ok());
        assert!(InarModel::constant(vec![1.0], 5.0).is_err());
        assert!(InarModel::constant(vec![0.6, 0.5], 5.0).is_err());
        assert!(InarModel::constant(vec![0.3], 0.0).is_err());
        assert!(InarModel::constant(vec![0.3], -1.0).is_err());
    }

    #[test]
    fn decay_weight_conventions() {
        let io = InterventionProfile::new(100, 0.0).unwrap();
        assert_eq!(io.weight(99), 0.0);
        assert_eq!(io.weight(100), 1.0);
        assert_eq!(io.weight(101), 0.0);

        let ls = InterventionProfile::new(100, 1.0).unwrap();
        assert_eq!(ls.weight(150), 1.0);

        let ts = InterventionProfile::new(100, 0.8).unwrap();
        assert!((ts.weight(102) - 0.64).abs() < 1e-15);
    }

    #[test]
    fn log_linear_mean() {
        let cov = CovariateMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let mean = MeanSpec::LogLinear { betas: vec![0.5, 1.0], covariates: cov };
        mean.validate().unwrap();
        assert!((mean.mean_at(1) - 0.5f64.exp()).abs() < 1e-12);
        assert!((mean.mean_at(2) - 1.5f64.exp()).abs() < 1e-12);
    }
}
