//! Goodness-of-fit machinery: two-sample and one-sample Kolmogorov–Smirnov,
//! chi-square with tail pooling, Wilson binomial intervals.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

/// Pass level used by every distributional check, fixed in advance.
pub const P_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("sample too small: need at least {needed}, got {got}")]
    Undersized { needed: usize, got: usize },
    #[error("observed and expected bins differ in length ({0} vs {1})")]
    BinMismatch(usize, usize),
    #[error("fewer than two bins remain after pooling")]
    TooFewBins,
    #[error("sample contains NaN")]
    NaN,
}

/// Outcome of one statistical check.
#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub threshold: f64,
    pub passed: bool,
    pub seed: Option<u64>,
    pub n_trials: Option<u64>,
    pub detail: String,
}

impl StatReport {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, passed: bool) -> Self {
        StatReport {
            name: name.into(),
            statistic,
            p_value: None,
            interval: None,
            threshold,
            passed,
            seed: None,
            n_trials: None,
            detail: String::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64, n_trials: u64) -> Self {
        self.seed = Some(seed);
        self.n_trials = Some(n_trials);
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn with_interval(mut self, lo: f64, hi: f64) -> Self {
        self.interval = Some((lo, hi));
        self
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Jacobi-theta form converges fast for small x.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let mut cdf = 0.0;
        for k in 1..100 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            cdf += term;
            if term < 1e-12 * cdf.max(1e-300) {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * cdf;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>, StatError> {
    if sample.iter().any(|x| x.is_nan()) {
        return Err(StatError::NaN);
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sided two-sample KS statistic; ties are stepped over together.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, StatError> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Two-sample KS test with the asymptotic Kolmogorov p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<StatReport, StatError> {
    const MIN: usize = 100;
    for s in [a, b] {
        if s.len() < MIN {
            return Err(StatError::Undersized { needed: MIN, got: s.len() });
        }
    }
    let d = ks_statistic(a, b)?;
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    let mut rep = StatReport::new("ks_two_sample", d, P_THRESHOLD, p > P_THRESHOLD);
    rep.p_value = Some(p);
    Ok(rep)
}

/// One-sample KS distance `sup |F_n − F|` against a continuous cdf.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<StatReport, StatError> {
    if sample.is_empty() {
        return Err(StatError::Undersized { needed: 1, got: 0 });
    }
    let v = sorted(sample)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    let p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    let mut rep = StatReport::new("ks_one_sample", d, P_THRESHOLD, p > P_THRESHOLD);
    rep.p_value = Some(p);
    Ok(rep)
}

/// Pearson chi-square goodness of fit. Bins are pooled left to right until
/// each pooled bin expects at least `min_expected` counts; a short final
/// group joins the one before it. `probs` should include any tail bin.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> Result<StatReport, StatError> {
    if observed.len() != probs.len() {
        return Err(StatError::BinMismatch(observed.len(), probs.len()));
    }
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probs) {
        o += ob as f64;
        e += p * nf;
        if e >= min_expected {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    if groups.len() < 2 {
        return Err(StatError::TooFewBins);
    }
    let stat: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (groups.len() - 1) as f64;
    let p = ChiSquared::new(df).expect("df ≥ 1").sf(stat);
    let mut rep = StatReport::new("chi_square", stat, P_THRESHOLD, p > P_THRESHOLD)
        .with_detail(format!("{} bins after pooling, df = {df}", groups.len()));
    rep.p_value = Some(p);
    Ok(rep)
}

/// Wilson score interval for `successes / n` at `z` standard deviations.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Standard error of a binomial proportion.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn kolmogorov_reference_values() {
        // Classical critical values: P(K > 1.358) ≈ 0.05, P(K > 1.628) ≈ 0.01.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 2e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        // Both series agree across the switch point.
        let below = kolmogorov_sf(1.18 - 1e-9);
        let above = kolmogorov_sf(1.18 + 1e-9);
        assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn identical_samples_have_zero_statistic() {
        let a: Vec<f64> = (0..500).map(|i| (i % 37) as f64).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, Some(1.0));
    }

    #[test]
    fn undersized_samples_are_rejected() {
        let a = vec![0.0; 99];
        let b = vec![0.0; 200];
        assert_eq!(ks_two_sample(&a, &b), Err(StatError::Undersized { needed: 100, got: 99 }));
    }

    #[test]
    fn ks_calibration_on_uniforms() {
        let mut rng = stream(2024);
        let mut passes = 0;
        for _ in 0..100 {
            let a: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
            if ks_two_sample(&a, &b).unwrap().passed {
                passes += 1;
            }
        }
        assert!(passes >= 99, "{passes}");
        let a: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| 0.1 + rng.random::<f64>()).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value.unwrap() < 1e-6);
    }

    #[test]
    fn one_sample_ks_on_uniform() {
        let mut rng = stream(5);
        let a: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let r = ks_one_sample(&a, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic < 0.02 && r.passed);
    }

    #[test]
    fn chi_square_pools_and_detects() {
        let probs = [0.25; 4];
        let r = chi_square_gof(&[250, 250, 250, 250], &probs, 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value.unwrap() - 1.0).abs() < 1e-12);
        let r = chi_square_gof(&[400, 200, 200, 200], &probs, 5.0).unwrap();
        assert!(!r.passed);
        // Tiny tail bins are merged into the last full group.
        let r = chi_square_gof(&[50, 48, 1, 1], &[0.5, 0.48, 0.01, 0.01], 5.0).unwrap();
        assert!(r.detail.starts_with("2 bins"));
        assert_eq!(chi_square_gof(&[1], &[1.0], 5.0), Err(StatError::TooFewBins));
        assert_eq!(chi_square_gof(&[1, 2], &[1.0], 5.0), Err(StatError::BinMismatch(2, 1)));
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 3.0);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 0, 3.0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(100, 100, 3.0);
        assert!(lo > 0.9 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments_and_median() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&x), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
