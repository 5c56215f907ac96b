//! Simulation of clean and contaminated Poisson INAR(p) paths.
//!
//! Per-component substreams (one per thinning lag, one for the innovations,
//! one per intervention) are derived from the caller's [`StreamKey`], so an
//! intervention with `kappa = 0` produces a path bitwise equal to the clean
//! simulation under the same key.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{InarModel, Intervention, MeanSpec};
use crate::rng::{component, StreamKey};
use crate::series::CountSeries;

/// Default number of pre-sample steps used to reach stationarity.
pub const DEFAULT_BURN_IN: usize = 500;

/// Binomial thinning `alpha ∘ count`: the number of survivors among `count`
/// independent Bernoulli(alpha) trials.
pub fn binomial_thin<R: Rng + ?Sized>(count: u32, alpha: f64, rng: &mut R) -> Result<u32> {
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::Domain(format!("thinning probability {alpha} outside [0, 1]")));
    }
    if count == 0 || alpha == 0.0 {
        return Ok(0);
    }
    if alpha == 1.0 {
        return Ok(count);
    }
    let draw = Binomial::new(count as u64, alpha)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    Ok(draw as u32)
}

fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u32> {
    if rate == 0.0 {
        return Ok(0);
    }
    let draw: f64 = Poisson::new(rate).map_err(|e| Error::Domain(e.to_string()))?.sample(rng);
    Ok(draw as u32)
}

/// Mean effect `kappa * delta^(t - tau) * 1(t >= tau)` of one intervention
/// at time `t`, with `0^0 = 1`.
pub fn intervention_mean(iv: &Intervention, t: usize) -> f64 {
    iv.kappa * iv.profile().weight(t)
}

/// Stationary mean `lambda / (1 - sum(alpha))` of a constant-mean model.
/// For `p > 1` this is the unconditional mean; the marginal law is Poisson
/// only for `p = 1`.
pub fn stationary_mean(model: &InarModel) -> Result<f64> {
    match model.mean() {
        MeanSpec::Constant(lambda) => Ok(lambda / (1.0 - model.alphas().iter().sum::<f64>())),
        MeanSpec::LogLinear { .. } => Err(Error::Unsupported(
            "stationary mean is undefined for a time-varying innovation mean".into(),
        )),
    }
}

/// Simulate `Y_t = sum_i alpha_i ∘ Y_{t-i} + e_t + sum_j U_{t,j}` for
/// `t = 1..n` after `burn_in` clean warm-up steps started from zeros.
///
/// Interventions are indexed on post-burn-in time: `U_{t,j} ~
/// Pois(kappa_j delta_j^(t - tau_j))` for retained times `t >= tau_j`. With a
/// log-linear mean, covariate rows `1..burn_in` feed the warm-up and rows
/// `burn_in + 1..burn_in + n` the retained window, so the matrix must have at
/// least `burn_in + n` rows.
pub fn simulate_contaminated(
    model: &InarModel,
    interventions: &[Intervention],
    n: usize,
    burn_in: usize,
    key: StreamKey,
) -> Result<CountSeries> {
    if n == 0 {
        return Err(Error::Config("requested series length 0".into()));
    }
    for iv in interventions {
        if iv.tau == 0 || iv.tau > n {
            return Err(Error::Config(format!(
                "intervention time {} outside the series 1..={n}",
                iv.tau
            )));
        }
        if iv.kappa < 0.0 {
            return Err(Error::Config(format!(
                "simulation requires kappa >= 0, got {}",
                iv.kappa
            )));
        }
    }
    if model.mean().max_time() < burn_in + n {
        return Err(Error::Config(format!(
            "log-linear mean provides {} covariate rows, need burn_in + n = {}",
            model.mean().max_time(),
            burn_in + n
        )));
    }

    let p = model.order();
    let mut thin_rngs: Vec<_> =
        (0..p).map(|i| key.child(component::THINNING).child(i as u64 + 1).rng()).collect();
    let mut innov_rng = key.child(component::INNOVATION).rng();
    let mut iv_rngs: Vec<_> = (0..interventions.len())
        .map(|j| key.child(component::INTERVENTION).child(j as u64 + 1).rng())
        .collect();

    // most recent p values, window[0] = Y_{t-1}
    let mut window = vec![0u32; p];
    let mut out = Vec::with_capacity(n);

    for step in 1..=(burn_in + n) {
        let lambda_t = model.mean().mean_at(step);
        if !(lambda_t.is_finite() && lambda_t > 0.0) {
            return Err(Error::Domain(format!(
                "innovation mean at step {step} is {lambda_t}"
            )));
        }
        let mut y: u64 = 0;
        for i in 0..p {
            y += binomial_thin(window[i], model.alphas()[i], &mut thin_rngs[i])? as u64;
        }
        y += poisson_draw(lambda_t, &mut innov_rng)? as u64;
        if step > burn_in {
            let t = step - burn_in;
            for (j, iv) in interventions.iter().enumerate() {
                y += poisson_draw(intervention_mean(iv, t), &mut iv_rngs[j])? as u64;
            }
            out.push(u32::try_from(y).map_err(|_| Error::Domain("count overflow".into()))?);
        }
        if p > 0 {
            window.rotate_right(1);
            window[0] = u32::try_from(y).map_err(|_| Error::Domain("count overflow".into()))?;
        }
    }

    CountSeries::new(out)
}

/// Clean INAR(p) path: [`simulate_contaminated`] with no interventions.
pub fn simulate_clean(
    model: &InarModel,
    n: usize,
    burn_in: usize,
    key: StreamKey,
) -> Result<CountSeries> {
    simulate_contaminated(model, &[], n, burn_in, key)
}
