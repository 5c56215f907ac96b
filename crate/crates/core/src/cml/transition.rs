//! Exact one-step transition probabilities of the Poisson INAR(p) model.
//!
//! `p(y_t | y_{t-1}, ..., y_{t-p})` is the convolution of p binomial
//! thinning laws with the Poisson innovation law. The nested sums are
//! evaluated in log space with log-sum-exp throughout; summing many small
//! probabilities in linear space loses the tail terms this likelihood
//! depends on.

use crate::dist::{binomial_ln_pmf, log_add_exp, poisson_ln_pmf};
use crate::error::{Error, Result};

/// Log transition probability `log p(y | lags)` for thinning probabilities
/// `alphas` and innovation mean `mean` (which may include intervention
/// effects).
pub fn transition_log_prob(y: u32, lags: &[u32], alphas: &[f64], mean: f64) -> Result<f64> {
    if alphas.len() != lags.len() {
        return Err(Error::Domain(format!(
            "{} thinning probabilities for {} lags",
            alphas.len(),
            lags.len()
        )));
    }
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::Domain(format!("innovation mean must be positive, got {mean}")));
    }
    for a in alphas {
        if !(a.is_finite() && (0.0..1.0).contains(a)) {
            return Err(Error::Domain(format!("thinning probability {a} outside [0, 1)")));
        }
    }
    Ok(log_prob_unchecked(y, lags, alphas, mean))
}

/// Shifted transition probability with the convention that it is zero
/// (log = -inf) whenever the target count or a shifted lag is negative.
pub(crate) fn shifted_log_prob(y: i64, lags: &[i64], alphas: &[f64], mean: f64) -> f64 {
    if y < 0 || lags.iter().any(|&l| l < 0) {
        return f64::NEG_INFINITY;
    }
    let lags_u: Vec<u32> = lags.iter().map(|&l| l as u32).collect();
    log_prob_unchecked(y as u32, &lags_u, alphas, mean)
}

fn log_prob_unchecked(y: u32, lags: &[u32], alphas: &[f64], mean: f64) -> f64 {
    // distribution of the total survivor count, in log space, capped at y
    let cap = y as usize;
    let mut dist = vec![f64::NEG_INFINITY; cap + 1];
    dist[0] = 0.0;
    let mut reach = 0usize; // highest attainable survivor count so far
    let mut buf = vec![f64::NEG_INFINITY; cap + 1];
    for (i, (&lag, &alpha)) in lags.iter().zip(alphas).enumerate() {
        let kmax = (lag as usize).min(cap);
        if i == 0 {
            for k in 0..=kmax {
                dist[k] = binomial_ln_pmf(k as u32, lag, alpha);
            }
            reach = kmax;
            continue;
        }
        if kmax == 0 && alpha == 0.0 {
            continue; // thinning contributes nothing
        }
        let new_reach = (reach + kmax).min(cap);
        buf[..=new_reach].fill(f64::NEG_INFINITY);
        for k in 0..=kmax {
            let b = binomial_ln_pmf(k as u32, lag, alpha);
            if b == f64::NEG_INFINITY {
                continue;
            }
            for s in 0..=reach.min(cap - k) {
                if dist[s] > f64::NEG_INFINITY {
                    buf[s + k] = log_add_exp(buf[s + k], dist[s] + b);
                }
            }
        }
        dist[..=new_reach].copy_from_slice(&buf[..=new_reach]);
        reach = new_reach;
    }
    // convolve with the Poisson innovation at the target y
    let mut acc = f64::NEG_INFINITY;
    for s in 0..=reach {
        if dist[s] > f64::NEG_INFINITY {
            acc = log_add_exp(acc, dist[s] + poisson_ln_pmf(y - s as u32, mean));
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::poisson_tail_point;
    use rand::Rng;

    #[test]
    fn no_survivors_from_zero_lag() {
        // p(0 | 0) with any alpha is the Poisson mass at 0
        let lp = transition_log_prob(0, &[0], &[0.3], 2.0).unwrap();
        assert!((lp + 2.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_reduces_to_poisson() {
        for y in 0..15u32 {
            let lp = transition_log_prob(y, &[9], &[0.0], 3.5).unwrap();
            assert!((lp - poisson_ln_pmf(y, 3.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_convolution_single_lag() {
        // p(1 | 1; alpha=0.3, mean 2) = 0.7 * 2 e^-2 + 0.3 * e^-2 = 1.7 e^-2
        let lp = transition_log_prob(1, &[1], &[0.3], 2.0).unwrap();
        assert!((lp - (1.7f64.ln() - 2.0)).abs() < 1e-12, "{lp}");
    }

    #[test]
    fn shifted_convention() {
        assert_eq!(shifted_log_prob(-1, &[3], &[0.3], 2.0), f64::NEG_INFINITY);
        assert_eq!(shifted_log_prob(2, &[-1], &[0.3], 2.0), f64::NEG_INFINITY);
    }

    #[test]
    fn domain_errors() {
        assert!(transition_log_prob(1, &[1], &[0.3], 0.0).is_err());
        assert!(transition_log_prob(1, &[1], &[1.0], 2.0).is_err());
        assert!(transition_log_prob(1, &[1, 2], &[0.3], 2.0).is_err());
    }

    /// Brute-force oracle: enumerate the nested sums in linear space with
    /// compensated (Neumaier) accumulation, independent of the log-space
    /// path under test.
    fn oracle(y: u32, lags: &[u32], alphas: &[f64], mean: f64) -> f64 {
        fn binom_pmf(k: u32, n: u32, p: f64) -> f64 {
            if p == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            let mut c = 1.0f64;
            for j in 0..k {
                c = c * (n - j) as f64 / (j + 1) as f64;
            }
            c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
        }
        fn pois_pmf(k: u32, lambda: f64) -> f64 {
            let mut v = (-lambda).exp();
            for j in 1..=k {
                v *= lambda / j as f64;
            }
            v
        }
        // Neumaier compensated sum over all index combinations
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        let mut add = |term: f64| {
            let t = sum + term;
            comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
            sum = t;
        };
        let mut idx = vec![0u32; lags.len()];
        loop {
            let used: u32 = idx.iter().sum();
            if used <= y && idx.iter().zip(lags).all(|(i, l)| i <= l) {
                let mut term = pois_pmf(y - used, mean);
                for (k, (&i, (&l, &a))) in idx.iter().zip(lags.iter().zip(alphas)).enumerate() {
                    let _ = k;
                    term *= binom_pmf(i, l, a);
                }
                add(term);
            }
            // odometer increment over 0..=min(lag, y) per position
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    return (sum + comp).ln();
                }
                idx[pos] += 1;
                if idx[pos] <= lags[pos].min(y) {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn matches_exhaustive_oracle() {
        // 200 random instances, p in {1, 2}, counts <= 15
        let mut rng = crate::rng::StreamKey::new(314).rng();
        for _ in 0..200 {
            let p = rng.random_range(1..=2usize);
            let y = rng.random_range(0..=15u32);
            let lags: Vec<u32> = (0..p).map(|_| rng.random_range(0..=15u32)).collect();
            let mut alphas: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..0.95)).collect();
            let s: f64 = alphas.iter().sum();
            if s >= 0.999 {
                for a in &mut alphas {
                    *a *= 0.95 / s;
                }
            }
            let mean = rng.random_range(0.1..8.0);
            let got = transition_log_prob(y, &lags, &alphas, mean).unwrap();
            let want = oracle(y, &lags, &alphas, mean);
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                "y={y} lags={lags:?} alphas={alphas:?} mean={mean}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn normalizes_to_one() {
        for &(lags, alphas, mean) in &[
            (&[4u32, 7][..], &[0.3, 0.25][..], 2.0),
            (&[12][..], &[0.9][..], 5.0),
            (&[0][..], &[0.5][..], 0.7),
        ] {
            let m = lags.iter().sum::<u32>() + poisson_tail_point(mean, 1e-15);
            let total: f64 = (0..=m)
                .map(|y| transition_log_prob(y, lags, alphas, mean).unwrap().exp())
                .sum();
            assert!(total >= 1.0 - 1e-12 && total <= 1.0 + 1e-12, "total {total}");
        }
    }
}
