//! Likelihood-ratio comparison of the power-law tail against other
//! heavy-tailed candidates fitted on the same tail.

use std::fmt;

use serde::Serialize;
use statrs::function::erf::erfc;

use super::optimize::nelder_mead;
use super::powerlaw::{DiscretePowerLaw, PowerLawFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    Exponential,
    Lognormal,
    Weibull,
}

impl Alternative {
    pub const ALL: [Alternative; 3] = [Alternative::Exponential, Alternative::Lognormal, Alternative::Weibull];

    pub fn as_str(self) -> &'static str {
        match self {
            Alternative::Exponential => "exponential",
            Alternative::Lognormal => "lognormal",
            Alternative::Weibull => "weibull",
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LRStats {
    /// Log-likelihood ratio; positive favours the power law.
    pub ratio: f64,
    /// `ratio / (sigma sqrt(n))`.
    pub normalized_ratio: f64,
    /// Two-sided significance of `ratio != 0`.
    pub p_value: f64,
    /// Fitted parameters of the alternative.
    pub parameters: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LRComparison {
    pub alternative: Alternative,
    /// `Err` carries the reason the alternative could not be fitted.
    pub outcome: Result<LRStats, String>,
}

/// Discretized log-pmf of an alternative on `k >= k_min`.
trait TailModel {
    fn ln_pmf(&self, k: u64) -> f64;
}

/// Geometric: `P(k) = (1 - e^-lambda) e^(-lambda (k - k_min))`.
struct Exponential {
    lambda: f64,
    k_min: u64,
}

impl TailModel for Exponential {
    fn ln_pmf(&self, k: u64) -> f64 {
        (-(-self.lambda).exp_m1()).ln() - self.lambda * (k - self.k_min) as f64
    }
}

fn normal_upper(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `ln(P(lo <= X < hi))` for a standard normal X, computed on the side
/// with the smaller tail.
fn ln_normal_interval(lo: f64, hi: f64) -> f64 {
    let mass = if lo >= 0.0 {
        normal_upper(lo) - normal_upper(hi)
    } else if hi <= 0.0 {
        normal_upper(-hi) - normal_upper(-lo)
    } else {
        1.0 - normal_upper(-lo) - normal_upper(hi)
    };
    mass.max(f64::MIN_POSITIVE).ln()
}

/// Lognormal mass on `[k - 1/2, k + 1/2)`, conditioned on `X >= k_min - 1/2`.
struct Lognormal {
    mu: f64,
    sigma: f64,
    ln_norm: f64,
}

impl Lognormal {
    fn new(mu: f64, sigma: f64, k_min: u64) -> Self {
        let z0 = ((k_min as f64 - 0.5).ln() - mu) / sigma;
        Lognormal {
            mu,
            sigma,
            ln_norm: ln_normal_interval(z0, f64::INFINITY),
        }
    }

    fn z(&self, x: f64) -> f64 {
        (x.ln() - self.mu) / self.sigma
    }
}

impl TailModel for Lognormal {
    fn ln_pmf(&self, k: u64) -> f64 {
        let k = k as f64;
        ln_normal_interval(self.z(k - 0.5), self.z(k + 0.5)) - self.ln_norm
    }
}

/// Stretched exponential `S(x) = exp(-(x / scale)^shape)` discretized on
/// `[k - 1/2, k + 1/2)` and conditioned on `X >= k_min - 1/2`.
struct Weibull {
    scale: f64,
    shape: f64,
    h0: f64,
}

impl Weibull {
    fn new(scale: f64, shape: f64, k_min: u64) -> Self {
        Weibull {
            scale,
            shape,
            h0: ((k_min as f64 - 0.5) / scale).powf(shape),
        }
    }
}

impl TailModel for Weibull {
    fn ln_pmf(&self, k: u64) -> f64 {
        let k = k as f64;
        let a = ((k - 0.5) / self.scale).powf(self.shape);
        let b = ((k + 0.5) / self.scale).powf(self.shape);
        // ln(S(a) - S(b)) - ln S(k_min - 1/2)
        let v = -(a - self.h0) + (-(-(b - a)).exp_m1()).max(f64::MIN_POSITIVE).ln();
        if v.is_nan() {
            f64::MIN
        } else {
            v
        }
    }
}

fn total_ln<M: TailModel>(m: &M, tail: &[u64]) -> f64 {
    tail.iter().map(|&k| m.ln_pmf(k)).sum()
}

fn fit_exponential(tail: &[u64], k_min: u64) -> Result<(Exponential, Vec<f64>), String> {
    let mean_excess = tail.iter().map(|&k| (k - k_min) as f64).sum::<f64>() / tail.len() as f64;
    if mean_excess <= 0.0 {
        return Err("tail has no spread".into());
    }
    let lambda = (1.0 + 1.0 / mean_excess).ln();
    Ok((Exponential { lambda, k_min }, vec![lambda]))
}

fn fit_lognormal(tail: &[u64], k_min: u64) -> Result<(Lognormal, Vec<f64>), String> {
    let n = tail.len() as f64;
    let logs: Vec<f64> = tail.iter().map(|&k| (k as f64).ln()).collect();
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
    let start = [mean, sd.max(0.1).ln()];
    let m = nelder_mead(
        |p| {
            let sigma = p[1].exp();
            if !sigma.is_finite() || sigma < 1e-6 || p[0].abs() > 1e4 {
                return f64::INFINITY;
            }
            -total_ln(&Lognormal::new(p[0], sigma, k_min), tail)
        },
        &start,
        0.5,
        4000,
    );
    if !m.converged || !m.value.is_finite() {
        return Err("lognormal likelihood did not converge".into());
    }
    let (mu, sigma) = (m.x[0], m.x[1].exp());
    Ok((Lognormal::new(mu, sigma, k_min), vec![mu, sigma]))
}

fn fit_weibull(tail: &[u64], k_min: u64) -> Result<(Weibull, Vec<f64>), String> {
    let mean = tail.iter().map(|&k| k as f64).sum::<f64>() / tail.len() as f64;
    let start = [mean.ln(), 0.5f64.ln()];
    let m = nelder_mead(
        |p| {
            let (scale, shape) = (p[0].exp(), p[1].exp());
            if !(scale.is_finite() && shape.is_finite()) || !(1e-4..=50.0).contains(&shape) {
                return f64::INFINITY;
            }
            -total_ln(&Weibull::new(scale, shape, k_min), tail)
        },
        &start,
        0.5,
        4000,
    );
    if !m.converged || !m.value.is_finite() {
        return Err("weibull likelihood did not converge".into());
    }
    let (scale, shape) = (m.x[0].exp(), m.x[1].exp());
    Ok((Weibull::new(scale, shape, k_min), vec![scale, shape]))
}

/// Vuong-style normalized log-likelihood ratio with a two-sided p-value.
pub fn likelihood_ratio(pointwise: &[f64]) -> (f64, f64, f64) {
    let n = pointwise.len() as f64;
    let r: f64 = pointwise.iter().sum();
    let mean = r / n;
    let var = pointwise.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma == 0.0 || !sigma.is_finite() {
        return (r, 0.0, 1.0);
    }
    let normalized = r / (sigma * n.sqrt());
    let p = erfc(r.abs() / (2.0 * n * var).sqrt());
    (r, normalized, p)
}

fn compare<M: TailModel>(tail: &[u64], pl: &DiscretePowerLaw, alt: &M) -> (f64, f64, f64) {
    let pointwise: Vec<f64> = tail.iter().map(|&k| pl.ln_pmf(k) - alt.ln_pmf(k)).collect();
    likelihood_ratio(&pointwise)
}

/// Compare the fitted power law with each alternative on the tail
/// `k >= fit.k_min`.
pub fn compare_distributions(degrees: &[u64], fit: &PowerLawFit) -> Vec<LRComparison> {
    let mut tail: Vec<u64> = degrees.iter().copied().filter(|&k| k >= fit.k_min).collect();
    tail.sort_unstable();
    let pl = DiscretePowerLaw::new(fit.alpha, fit.k_min);
    Alternative::ALL
        .iter()
        .map(|&alternative| {
            let outcome = match alternative {
                Alternative::Exponential => {
                    fit_exponential(&tail, fit.k_min).map(|(m, p)| (compare(&tail, &pl, &m), p))
                }
                Alternative::Lognormal => fit_lognormal(&tail, fit.k_min).map(|(m, p)| (compare(&tail, &pl, &m), p)),
                Alternative::Weibull => fit_weibull(&tail, fit.k_min).map(|(m, p)| (compare(&tail, &pl, &m), p)),
            }
            .map(|((ratio, normalized_ratio, p_value), parameters)| LRStats {
                ratio,
                normalized_ratio,
                p_value,
                parameters,
            });
            if let Err(e) = &outcome {
                log::warn!("{alternative} comparison unavailable: {e}");
            }
            LRComparison { alternative, outcome }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::powerlaw::fit_power_law_at;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pmf_sum<M: TailModel>(m: &M, k_min: u64) -> f64 {
        (k_min..200_000).map(|k| m.ln_pmf(k).exp()).sum()
    }

    #[test]
    fn alternative_pmfs_normalize() {
        assert!((pmf_sum(&Exponential { lambda: 0.1, k_min: 4 }, 4) - 1.0).abs() < 1e-9);
        assert!((pmf_sum(&Lognormal::new(2.0, 1.0, 4), 4) - 1.0).abs() < 1e-6);
        assert!((pmf_sum(&Weibull::new(10.0, 0.7, 4), 4) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_mle_closed_form_is_stationary() {
        let tail: Vec<u64> = (0..500).map(|i| 3 + (i % 17) as u64).collect();
        let (m, _) = fit_exponential(&tail, 3).unwrap();
        let ll = |lambda: f64| total_ln(&Exponential { lambda, k_min: 3 }, &tail);
        let h = 1e-5;
        let deriv = (ll(m.lambda + h) - ll(m.lambda - h)) / (2.0 * h);
        assert!(deriv.abs() < 1e-3, "{deriv}");
    }

    #[test]
    fn exponential_data_disfavours_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // geometric with mean 20 via inverse CDF
        let q: f64 = 1.0 - 1.0 / 20.0;
        let data: Vec<u64> = (0..10_000)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                1 + (u.ln() / q.ln()).floor() as u64
            })
            .collect();
        // over the whole support the comparison has ample power
        let fit = fit_power_law_at(&data, 1).unwrap();
        let cmp = compare_distributions(&data, &fit);
        let exp = cmp[0].outcome.as_ref().unwrap();
        assert!(exp.ratio < 0.0 && exp.p_value < 1e-6, "{fit:?} {exp:?}");
        // the fitted rate is the tail MLE of a geometric on {1, 2, ...}
        let mean = data.iter().sum::<u64>() as f64 / data.len() as f64;
        assert!((exp.parameters[0] - (1.0 + 1.0 / (mean - 1.0)).ln()).abs() < 1e-9);
    }

    #[test]
    fn ratio_sign_and_p_value() {
        let (r, n, p) = likelihood_ratio(&[1.0, 2.0, 3.0]);
        assert_eq!(r, 6.0);
        assert!(n > 0.0 && p < 1.0);
        let (_, _, p0) = likelihood_ratio(&[0.0, 0.0]);
        assert_eq!(p0, 1.0);
    }
}
