//! Distribution helpers shared across the testing and likelihood layers.

use statrs::function::erf::{erf, erf_inv, erfc};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Upper-tail probability of the chi-square distribution with 1 degree of
/// freedom. For one degree of freedom the regularized upper incomplete
/// gamma function Q(1/2, x/2) reduces to `erfc(sqrt(x/2))`.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    erfc((x / 2.0).sqrt())
}

/// Quantile of the chi-square distribution with 1 degree of freedom at
/// cumulative probability `p`. Newton-polished so that the tail round-trips
/// to ~1e-12.
pub fn chi2_1_quantile(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("quantile probability {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let mut y = erf_inv(p);
    // two Newton steps on erf(y) = p
    for _ in 0..2 {
        let f = erf(y) - p;
        let d = 2.0 / std::f64::consts::PI.sqrt() * (-y * y).exp();
        if d == 0.0 {
            break;
        }
        y -= f / d;
    }
    Ok(2.0 * y * y)
}

pub fn poisson_ln_pmf(k: u32, lambda: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    -lambda + k as f64 * lambda.ln() - ln_gamma(k as f64 + 1.0)
}

/// Smallest `m` with `P(X > m) <= tol` for `X ~ Poisson(lambda)`, by direct
/// summation of the mass function.
pub fn poisson_tail_point(lambda: f64, tol: f64) -> u32 {
    debug_assert!(lambda > 0.0 && tol > 0.0);
    let p0 = (-lambda).exp();
    if p0 == 0.0 {
        // rates far beyond anything this crate fits; coarse normal bound
        return (lambda + 12.0 * lambda.sqrt() + 12.0) as u32;
    }
    let target = 1.0 - tol;
    let mut pk = p0;
    let mut cum = p0;
    let mut k = 0u32;
    while cum < target && k < u32::MAX - 1 {
        k += 1;
        pk *= lambda / k as f64;
        cum += pk;
        if pk == 0.0 {
            break;
        }
    }
    k
}

pub fn binomial_ln_pmf(k: u32, n: u32, p: f64) -> f64 {
    debug_assert!(k <= n);
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (n_f, k_f) = (n as f64, k as f64);
    ln_gamma(n_f + 1.0) - ln_gamma(k_f + 1.0) - ln_gamma(n_f - k_f + 1.0)
        + k_f * p.ln()
        + (n_f - k_f) * (1.0 - p).ln()
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
