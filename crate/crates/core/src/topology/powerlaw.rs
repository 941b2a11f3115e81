//! Discrete power-law fitting: MLE for the exponent, KS-minimizing lower
//! cutoff, and the semiparametric bootstrap goodness-of-fit test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::optimize::golden_section;
use super::zeta::hurwitz_zeta;
use crate::error::{Error, Result};

/// Smallest admissible tail size when scanning lower cutoffs.
pub const MIN_TAIL: usize = 50;
pub const DEFAULT_BOOTSTRAP: usize = 5000;
pub const DEFAULT_SEED: u64 = 0x5eed_2021;

const ALPHA_MIN: f64 = 1.000_001;
const ALPHA_MAX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub k_min: u64,
    pub alpha: f64,
    pub ks_distance: f64,
    pub n_tail: usize,
    /// Total number of observations the fit was drawn from.
    pub n_total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoFResult {
    pub p_value: f64,
    pub n_bootstrap: usize,
}

/// `P(K = k) = k^-alpha / zeta(alpha, k_min)` for `k >= k_min`.
#[derive(Debug, Clone, Copy)]
pub struct DiscretePowerLaw {
    pub alpha: f64,
    pub k_min: u64,
    norm: f64,
}

impl DiscretePowerLaw {
    pub fn new(alpha: f64, k_min: u64) -> Self {
        DiscretePowerLaw {
            alpha,
            k_min,
            norm: hurwitz_zeta(alpha, k_min as f64),
        }
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        -self.alpha * (k as f64).ln() - self.norm.ln()
    }

    /// `P(K >= k)`.
    pub fn survival(&self, k: u64) -> f64 {
        if k <= self.k_min {
            1.0
        } else {
            hurwitz_zeta(self.alpha, k as f64) / self.norm
        }
    }

    /// `P(K <= k)`.
    pub fn cdf(&self, k: u64) -> f64 {
        1.0 - self.survival(k + 1)
    }
}

/// Inverse-CDF sampler: exact table lookup over the bulk, continuous
/// approximation conditioned on the far tail beyond the table.
pub struct PowerLawSampler {
    dist: DiscretePowerLaw,
    survival: Vec<f64>,
    tail_start: u64,
    tail_mass: f64,
}

impl PowerLawSampler {
    pub fn new(dist: DiscretePowerLaw) -> Self {
        const TABLE: usize = 100_000;
        let mut survival = Vec::with_capacity(TABLE);
        let mut s = 1.0;
        for i in 0..TABLE as u64 {
            survival.push(s);
            let k = dist.k_min + i;
            s -= (dist.ln_pmf(k)).exp();
            if s < 1e-12 {
                break;
            }
        }
        let tail_start = dist.k_min + survival.len() as u64;
        let tail_mass = dist.survival(tail_start);
        PowerLawSampler {
            dist,
            survival,
            tail_start,
            tail_mass,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        if u <= self.tail_mass {
            let scaled = u / self.tail_mass;
            let x = (self.tail_start as f64 - 0.5) * scaled.powf(-1.0 / (self.dist.alpha - 1.0)) + 0.5;
            return if x.is_finite() && x < 9.0e18 {
                x.floor() as u64
            } else {
                u64::MAX / 2
            };
        }
        let count = self.survival.partition_point(|&s| s >= u);
        self.dist.k_min + count.saturating_sub(1) as u64
    }
}

/// Sorted tail summary used for one candidate cutoff.
struct Tail<'a> {
    values: &'a [u64],
    sum_ln: f64,
}

fn mle_alpha(tail: &Tail<'_>, k_min: u64) -> f64 {
    let n = tail.values.len() as f64;
    let neg_ll = |a: f64| a * tail.sum_ln + n * hurwitz_zeta(a, k_min as f64).ln();
    // continuous-approximation starting bracket
    let denom = tail.sum_ln - n * (k_min as f64 - 0.5).ln();
    let guess = if denom > 0.0 { 1.0 + n / denom } else { ALPHA_MAX };
    let mut lo = (guess - 1.0).max(ALPHA_MIN);
    let mut hi = (guess + 1.0).min(ALPHA_MAX);
    let mut a = golden_section(neg_ll, lo, hi, 1e-9);
    // widen if the optimum sits on a bracket edge
    for _ in 0..4 {
        let at_lo = (a - lo).abs() < 1e-6 && lo > ALPHA_MIN;
        let at_hi = (hi - a).abs() < 1e-6 && hi < ALPHA_MAX;
        if !at_lo && !at_hi {
            break;
        }
        lo = (lo - 2.0).max(ALPHA_MIN);
        hi = (hi + 2.0).min(ALPHA_MAX);
        a = golden_section(neg_ll, lo, hi, 1e-9);
    }
    a
}

/// Supremum over integers `k >= k_min` of |empirical CDF - fitted CDF|.
fn ks_distance(values: &[u64], dist: &DiscretePowerLaw) -> f64 {
    let n = values.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    let mut prev_emp = 0.0;
    while i < values.len() {
        let v = values[i];
        // just below v the empirical CDF still equals prev_emp
        if v > dist.k_min {
            d = d.max((prev_emp - dist.cdf(v - 1)).abs());
        }
        let mut j = i;
        while j < values.len() && values[j] == v {
            j += 1;
        }
        let emp = j as f64 / n;
        d = d.max((emp - dist.cdf(v)).abs());
        prev_emp = emp;
        i = j;
    }
    d
}

fn fit_sorted(sorted: &[u64]) -> Result<PowerLawFit> {
    let positive_from = sorted.partition_point(|&k| k == 0);
    let data = &sorted[positive_from..];
    if data.len() < MIN_TAIL {
        return Err(Error::NoTail(format!(
            "{} positive observations, need at least {MIN_TAIL}",
            data.len()
        )));
    }
    if data.first() == data.last() {
        return Err(Error::NoTail("all observations are equal".into()));
    }

    // suffix sums of ln k
    let mut suffix_ln = vec![0.0; data.len() + 1];
    for i in (0..data.len()).rev() {
        suffix_ln[i] = suffix_ln[i + 1] + (data[i] as f64).ln();
    }

    let mut candidates = Vec::new();
    let mut i = 0;
    while i < data.len() {
        let tail_len = data.len() - i;
        if tail_len < MIN_TAIL {
            break;
        }
        // need at least two distinct values in the tail
        if data[i] != data[data.len() - 1] {
            candidates.push(i);
        }
        let v = data[i];
        while i < data.len() && data[i] == v {
            i += 1;
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoTail("no cutoff leaves a non-degenerate tail".into()));
    }

    let fits: Vec<PowerLawFit> = candidates
        .par_iter()
        .map(|&start| {
            let values = &data[start..];
            let k_min = values[0];
            let tail = Tail {
                values,
                sum_ln: suffix_ln[start],
            };
            let alpha = mle_alpha(&tail, k_min);
            let ks = ks_distance(values, &DiscretePowerLaw::new(alpha, k_min));
            PowerLawFit {
                k_min,
                alpha,
                ks_distance: ks,
                n_tail: values.len(),
                n_total: sorted.len(),
            }
        })
        .collect();

    // candidates are in ascending k_min, so the first minimum wins ties
    let best = fits
        .into_iter()
        .reduce(|best, f| if f.ks_distance < best.ks_distance { f } else { best })
        .expect("non-empty candidates");
    Ok(best)
}

/// Fit a discrete power law to the positive observations in `degrees`.
///
/// Every observed value leaving at least [`MIN_TAIL`] observations is tried
/// as `k_min`; the exponent is the exact discrete MLE on that tail and the
/// returned fit minimizes the KS distance (smaller `k_min` on ties).
pub fn fit_power_law(degrees: &[u64]) -> Result<PowerLawFit> {
    let mut sorted = degrees.to_vec();
    sorted.sort_unstable();
    fit_sorted(&sorted)
}

/// Fit with a fixed `k_min` instead of the KS scan.
pub fn fit_power_law_at(degrees: &[u64], k_min: u64) -> Result<PowerLawFit> {
    if k_min == 0 {
        return Err(Error::Invalid("k_min must be positive".into()));
    }
    let mut values: Vec<u64> = degrees.iter().copied().filter(|&k| k >= k_min).collect();
    values.sort_unstable();
    if values.len() < MIN_TAIL || values.first() == values.last() {
        return Err(Error::NoTail(format!(
            "{} observations at or above {k_min}, need {MIN_TAIL} with two distinct values",
            values.len()
        )));
    }
    let tail = Tail {
        values: &values,
        // same order as the scan's suffix sums
        sum_ln: values.iter().rev().fold(0.0, |acc, &k| acc + (k as f64).ln()),
    };
    let alpha = mle_alpha(&tail, k_min);
    Ok(PowerLawFit {
        k_min,
        alpha,
        ks_distance: ks_distance(&values, &DiscretePowerLaw::new(alpha, k_min)),
        n_tail: values.len(),
        n_total: degrees.len(),
    })
}

fn replicate_seed(master: u64, index: u64) -> u64 {
    // splitmix64 over (master, index)
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Semiparametric bootstrap p-value for the fit.
///
/// Each replicate redraws `n_total` values: from the fitted tail with
/// probability `n_tail / n_total`, otherwise uniformly from the observed
/// values below `k_min`. Replicates refit from scratch; the p-value is the
/// share whose KS distance is at least the observed one. Replicate seeds
/// derive from `(seed, index)` so the result is independent of threads.
pub fn bootstrap_gof(degrees: &[u64], fit: &PowerLawFit, n: usize, seed: u64) -> Result<GoFResult> {
    if n < 100 {
        return Err(Error::Invalid(format!(
            "bootstrap needs at least 100 replicates, got {n}"
        )));
    }
    let mut sorted: Vec<u64> = degrees.iter().copied().filter(|&k| k > 0).collect();
    sorted.sort_unstable();
    let below: Vec<u64> = sorted.iter().copied().take_while(|&k| k < fit.k_min).collect();
    let n_total = sorted.len();
    let p_tail = fit.n_tail as f64 / n_total as f64;
    let sampler = PowerLawSampler::new(DiscretePowerLaw::new(fit.alpha, fit.k_min));

    let outcomes: Vec<Option<bool>> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, r));
            let mut sample: Vec<u64> = (0..n_total)
                .map(|_| {
                    if below.is_empty() || rng.random::<f64>() < p_tail {
                        sampler.sample(&mut rng)
                    } else {
                        below[rng.random_range(0..below.len())]
                    }
                })
                .collect();
            sample.sort_unstable();
            fit_sorted(&sample).ok().map(|f| f.ks_distance >= fit.ks_distance)
        })
        .collect();

    let valid: Vec<bool> = outcomes.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::NoTail("every bootstrap replicate failed to fit".into()));
    }
    let hits = valid.iter().filter(|&&b| b).count();
    Ok(GoFResult {
        p_value: hits as f64 / valid.len() as f64,
        n_bootstrap: valid.len(),
    })
}

/// Empirical and fitted complementary CDF for plotting:
/// `(degree, P_emp(K >= d), P_fit(K >= d))`, fitted only for `d >= k_min`.
pub fn ccdf_rows(degrees: &[u64], fit: Option<&PowerLawFit>) -> Vec<(u64, f64, Option<f64>)> {
    let mut sorted: Vec<u64> = degrees.iter().copied().filter(|&k| k > 0).collect();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let dist = fit.map(|f| (f, DiscretePowerLaw::new(f.alpha, f.k_min)));
    let mut rows = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let emp = (sorted.len() - i) as f64 / n;
        let fitted = dist
            .as_ref()
            .and_then(|(f, d)| (v >= f.k_min).then(|| f.n_tail as f64 / f.n_total as f64 * d.survival(v)));
        rows.push((v, emp, fitted));
        while i < sorted.len() && sorted[i] == v {
            i += 1;
        }
    }
    rows
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Independent sampler: direct summation of k^-alpha up to a large cap.
    pub(crate) fn oracle_sample(alpha: f64, k_min: u64, n: usize, seed: u64) -> Vec<u64> {
        let cap = 2_000_000u64;
        let mut cdf = Vec::with_capacity((cap - k_min) as usize);
        let mut acc = 0.0;
        for k in k_min..cap {
            acc += (k as f64).powf(-alpha);
            cdf.push(acc);
        }
        let total = acc;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                k_min + cdf.partition_point(|&c| c < u) as u64
            })
            .collect()
    }

    #[test]
    fn fixed_cutoff_matches_scan() {
        let data = oracle_sample(2.2, 3, 3000, 8);
        let scan = fit_power_law(&data).unwrap();
        let fixed = fit_power_law_at(&data, scan.k_min).unwrap();
        assert_eq!(scan, fixed);
        assert!(fit_power_law_at(&data, 0).is_err());
        assert!(matches!(fit_power_law_at(&data, 1 << 40), Err(Error::NoTail(_))));
    }

    #[test]
    fn pmf_sums_to_one() {
        let d = DiscretePowerLaw::new(2.5, 5);
        let s: f64 = (5..200_000u64).map(|k| d.ln_pmf(k).exp()).sum();
        assert!((s + d.survival(200_000) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn too_few_observations() {
        let err = fit_power_law(&[3; 10]).unwrap_err();
        assert!(matches!(err, Error::NoTail(_)));
    }

    #[test]
    fn degenerate_sequence() {
        let err = fit_power_law(&[4; 500]).unwrap_err();
        assert!(err.to_string().contains("no tail to fit"));
    }

    #[test]
    fn recovers_synthetic_exponent() {
        let data = oracle_sample(2.5, 5, 10_000, 17);
        let fit = fit_power_law(&data).unwrap();
        assert!((fit.alpha - 2.5).abs() <= 0.1, "{fit:?}");
        assert!((3..=10).contains(&fit.k_min), "{fit:?}");
    }

    #[test]
    fn ks_distance_is_a_supremum() {
        // brute force over every integer in range
        let data = oracle_sample(2.2, 3, 500, 5);
        let mut sorted = data.clone();
        sorted.sort_unstable();
        let d = DiscretePowerLaw::new(2.2, 3);
        let fast = ks_distance(&sorted, &d);
        let max = *sorted.last().unwrap();
        let mut brute: f64 = 0.0;
        for k in 3..=max {
            let emp = sorted.partition_point(|&x| x <= k) as f64 / sorted.len() as f64;
            brute = brute.max((emp - d.cdf(k)).abs());
        }
        assert!((fast - brute).abs() < 1e-12, "{fast} vs {brute}");
    }

    #[test]
    fn sampler_matches_oracle_distribution() {
        let d = DiscretePowerLaw::new(2.5, 5);
        let s = PowerLawSampler::new(d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut ge10 = 0;
        for _ in 0..n {
            if s.sample(&mut rng) >= 10 {
                ge10 += 1;
            }
        }
        let expect = d.survival(10);
        let got = ge10 as f64 / n as f64;
        assert!((got - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt());
    }

    #[test]
    fn bootstrap_rejects_small_n() {
        let data = oracle_sample(2.5, 5, 1000, 1);
        let fit = fit_power_law(&data).unwrap();
        assert!(bootstrap_gof(&data, &fit, 50, 1).is_err());
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let data = oracle_sample(2.5, 5, 600, 9);
        let fit = fit_power_law(&data).unwrap();
        let a = bootstrap_gof(&data, &fit, 100, 42).unwrap();
        let b = bootstrap_gof(&data, &fit, 100, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ccdf_starts_at_one() {
        let data = oracle_sample(2.5, 5, 1000, 2);
        let fit = fit_power_law(&data).unwrap();
        let rows = ccdf_rows(&data, Some(&fit));
        assert_eq!(rows[0].1, 1.0);
        assert!(rows.iter().all(|r| (r.0 >= fit.k_min) == r.2.is_some()));
    }
}
