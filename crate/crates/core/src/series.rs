use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An observed count time series `y_1, ..., y_n`.
///
/// Values are nonnegative integers and the length is fixed at construction.
/// Time indices in this crate are 1-based wherever they name a position in
/// the series (intervention times `tau`, tested times, report fields);
/// [`CountSeries::values`] exposes the underlying 0-based slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    values: Vec<u32>,
    /// Optional label for `t = 1`, carried through reports unchanged.
    origin: Option<String>,
}

impl CountSeries {
    pub fn new(values: Vec<u32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("a count series must have length >= 1".into()));
        }
        Ok(Self { values, origin: None })
    }

    pub fn with_origin(values: Vec<u32>, origin: impl Into<String>) -> Result<Self> {
        let mut s = Self::new(values)?;
        s.origin = Some(origin.into());
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// Value at 1-based time `t`.
    pub fn value_at(&self, t: usize) -> u32 {
        self.values[t - 1]
    }

    pub fn origin(&self) -> Option<&str> {
        self.origin.as_deref()
    }

    pub fn sample_mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.len() as f64
    }

    /// Lag-1 sample autocorrelation; 0 for constant series.
    pub fn lag1_autocorr(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.sample_mean();
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..n {
            let d = self.values[t] as f64 - mean;
            den += d * d;
            if t + 1 < n {
                num += d * (self.values[t + 1] as f64 - mean);
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}
