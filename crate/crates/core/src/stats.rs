//! Sample statistics used by the samplers' checks and the weak-error module.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Running mean/variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanVar {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = MeanVar::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Empirical characteristic function with per-part standard errors.
#[derive(Debug, Clone, Copy)]
pub struct Ecf {
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

pub fn ecf(samples: &[f64], xi: f64) -> Ecf {
    let re: MeanVar = samples.iter().map(|x| (xi * x).cos()).collect();
    let im: MeanVar = samples.iter().map(|x| (xi * x).sin()).collect();
    Ecf {
        value: Complex64::new(re.mean, im.mean),
        se_re: re.std_error(),
        se_im: im.std_error(),
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS statistic `sup |F_a - F_b|` with the asymptotic p-value
/// (Stephens' small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let statistic = ks_statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * statistic;
    KsResult {
        statistic,
        p_value: kolmogorov_survival(lambda),
    }
}

/// Critical value of the two-sample KS statistic at level `level`
/// (asymptotic, `c(a) sqrt((n+m)/(nm))`).
pub fn ks_critical_value(n: usize, m: usize, level: f64) -> f64 {
    let c = (-0.5 * (level / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// `∫ |F_a(x) - F_b(x)| dx` for the two empirical measures. For equal sizes
/// this is the mean absolute difference of the sorted samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut last = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / n - j as f64 / m).abs() * (next - last);
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        last = next;
    }
    total
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
    }
}

/// Fixed shard count for Monte Carlo ensembles. Independent of the worker
/// count, so merged results do not depend on how many threads ran.
pub const ENSEMBLE_SHARDS: usize = 64;

/// Splits `0..n` into `shards` contiguous ranges, evaluates them on the current
/// rayon pool and returns the results in shard order.
pub fn sharded<T, F>(n: u64, shards: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync,
{
    let shards = shards.max(1) as u64;
    (0..shards)
        .into_par_iter()
        .map(|s| f(n * s / shards..n * (s + 1) / shards))
        .collect()
}
