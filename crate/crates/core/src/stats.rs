//! Small statistics toolkit used by the Monte Carlo checks.
//!
//! Everything here is deterministic: reductions run in a fixed order with
//! compensated summation, and the bootstrap draws from a seeded substream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(values: &[f64]) -> f64 {
    let mut acc = Neumaier::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut acc = Neumaier::new();
    for &v in values {
        acc.add((v - mean) * (v - mean));
    }
    let var = acc.value() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance together with the standard error of that
/// variance estimate (normal-theory plus kurtosis correction).
pub fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let (mean, _) = mean_se(values);
    let mut m2 = Neumaier::new();
    let mut m4 = Neumaier::new();
    for &v in values {
        let d = (v - mean) * (v - mean);
        m2.add(d);
        m4.add(d * d);
    }
    let var = m2.value() / (n - 1.0);
    let mu4 = m4.value() / n;
    let se = ((mu4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

/// Binomial frequency and its standard error.
pub fn frequency(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// One-sample Kolmogorov–Smirnov statistic. Observations above `censor`
/// (including `+inf`) only enter through the empirical CDF, and the sup is
/// restricted to `[.., censor]`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F, censor: f64) -> f64 {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        if x > censor {
            let f = cdf(censor);
            d = d.max((f - i as f64 / n).abs());
            break;
        }
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic Kolmogorov tail probability with the Stephens small-sample
/// correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F, censor: f64) -> KsResult {
    let statistic = ks_statistic(sample, cdf, censor);
    KsResult { statistic, p_value: kolmogorov_pvalue(statistic, sample.len()), n: sample.len() }
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = rng::substream(seed, 0);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = Neumaier::new();
        for _ in 0..n {
            acc.add(values[rng.random_range(0..n)]);
        }
        means.push(acc.value() / n as f64);
    }
    means.sort_by(|a, b| a.total_cmp(b));
    let a = (1.0 - level) / 2.0;
    (quantile_sorted(&means, a), quantile_sorted(&means, 1.0 - a))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&s, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    pub n: usize,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len().min(y.len());
    let nf = n as f64;
    let mx = sum(&x[..n]) / nf;
    let my = sum(&y[..n]) / nf;
    let (mut sxx, mut sxy, mut syy) = (Neumaier::new(), Neumaier::new(), Neumaier::new());
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx.add(dx * dx);
        sxy.add(dx * dy);
        syy.add(dy * dy);
    }
    let (sxx, sxy, syy) = (sxx.value(), sxy.value(), syy.value());
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_se = if n > 2 { (ss_res / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    LinearFit { slope, intercept, r_squared, slope_se, n }
}
