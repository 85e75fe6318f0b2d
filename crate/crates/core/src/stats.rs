//! Small statistics toolkit used by the Monte Carlo checks.

use serde::{Deserialize, Serialize};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: f64::INFINITY, n };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, se: (var / n as f64).sqrt(), n }
    }

    /// Mean and standard error of `f(x)` over the samples.
    pub fn of<F: Fn(f64) -> f64>(xs: &[f64], f: F) -> Self {
        let mapped: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        Self::from_samples(&mapped)
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Result of a two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

impl KsReport {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample KS statistic with the asymptotic Kolmogorov p-value
/// (Stephens' small-sample correction on the effective size).
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsReport {
    let a = sorted(xs);
    let b = sorted(ys);
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return KsReport { statistic: f64::NAN, p_value: f64::NAN, n1, n2 };
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = a[i].min(b[j]);
        while i < n1 && a[i] <= x {
            i += 1;
        }
        while j < n2 && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    KsReport { statistic: d, p_value: kolmogorov_survival(lambda), n1, n2 }
}

/// P(K > lambda) for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Hill estimate of the tail index from the `k` largest positive values.
pub fn hill_estimator(xs: &[f64], k: usize) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    if k == 0 || k >= v.len() {
        return f64::NAN;
    }
    v.sort_by(|a, b| b.total_cmp(a));
    let threshold = v[k];
    let s: f64 = v[..k].iter().map(|x| (x / threshold).ln()).sum();
    if s <= 0.0 {
        f64::NAN
    } else {
        k as f64 / s
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Empirical quantile with linear interpolation.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let v = sorted(xs);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_estimate_basic() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        let var = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((m.se - (var / 4.0f64).sqrt()).abs() < 1e-15);
        assert!(m.within(2.5 + m.se, 1.0));
    }

    #[test]
    fn ks_statistic_matches_brute_force() {
        let xs = [0.1, 0.4, 0.5, 0.9, 1.3];
        let ys = [0.2, 0.3, 0.35, 1.0];
        // brute force over all pooled points
        let ecdf = |v: &[f64], t: f64| v.iter().filter(|x| **x <= t).count() as f64 / v.len() as f64;
        let d = xs
            .iter()
            .chain(ys.iter())
            .map(|&t| (ecdf(&xs, t) - ecdf(&ys, t)).abs())
            .fold(0.0, f64::max);
        assert!((ks_two_sample(&xs, &ys).statistic - d).abs() < 1e-15);
    }

    #[test]
    fn ks_with_ties() {
        let xs = [1.0, 1.0, 2.0, 2.0];
        let ys = [1.0, 1.0, 2.0, 2.0];
        assert_eq!(ks_two_sample(&xs, &ys).statistic, 0.0);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // P(K > 1.36) ~ 0.049 and P(K > 1.63) ~ 0.0098
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 5e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn hill_on_exact_pareto_quantiles() {
        // deterministic Pareto(1.5) quantiles: x_i = (i/n)^{-1/1.5}
        let n = 20_000;
        let xs: Vec<f64> = (1..=n).map(|i| (i as f64 / (n + 1) as f64).powf(-1.0 / 1.5)).collect();
        let h = hill_estimator(&xs, 2000);
        assert!((h - 1.5).abs() < 0.02, "{h}");
    }

    #[test]
    fn wilson_contains_proportion() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-12 && (c - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_endpoints() {
        let v = [3.0, 1.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 3.0);
        assert_eq!(quantile(&v, 0.5), 2.0);
    }
}
