//! Estimators and tests used by the verification suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided normal quantile for a 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Running mean and variance; mergeable, so replica batches can be reduced
/// in any fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanAcc {
    pub n: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
}

impl FromIterator<f64> for MeanAcc {
    fn from_iter<I: IntoIterator<Item = f64>>(xs: I) -> Self {
        let mut a = MeanAcc::new();
        for x in xs {
            a.push(x);
        }
        a
    }
}

impl MeanAcc {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanAcc) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::normal(self.mean, self.se(), self.n)
    }
}

/// Point estimate with standard error and a 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

impl Estimate {
    pub fn normal(mean: f64, se: f64, n: u64) -> Self {
        Estimate { mean, se, ci_low: mean - Z95 * se, ci_high: mean + Z95 * se, n }
    }

    /// An exactly known value.
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, se: 0.0, ci_low: value, ci_high: value, n: 0 }
    }

    /// Proportion `k / n` with a Wilson score interval.
    pub fn proportion(k: u64, n: u64) -> Self {
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let se = if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() };
        Estimate { mean: p, se, ci_low: lo, ci_high: hi, n }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    /// True when the 95% intervals do not overlap and `self` lies below.
    pub fn separated_below(&self, other: &Estimate) -> bool {
        self.ci_high < other.ci_low
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// `sqrt(a^2 + b^2)`: standard error of a difference of independent means.
pub fn pooled_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - n.cdf(z.abs()))
}

/// Result of a goodness-of-fit or homogeneity test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

fn chi2_sf(stat: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    let c = ChiSquared::new(df).expect("positive degrees of freedom");
    1.0 - c.cdf(stat)
}

/// Pearson goodness of fit of counts against probabilities. Cells with
/// expected count below `min_expected` are pooled into one cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> TestResult {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let n_f = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (o, p) in observed.iter().zip(probs) {
        let e = p * n_f;
        if e < min_expected {
            pool_o += *o as f64;
            pool_e += e;
        } else {
            stat += (*o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    } else if pool_o > 0.0 {
        // an impossible outcome occurred
        return TestResult { statistic: f64::INFINITY, df: cells as f64, p_value: 0.0 };
    }
    let df = cells.saturating_sub(1) as f64;
    TestResult { statistic: stat, df, p_value: chi2_sf(stat, df) }
}

/// Chi-square test that two count vectors come from the same distribution.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> TestResult {
    assert_eq!(a.len(), b.len());
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let n = na + nb;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (x, y) in a.iter().zip(b) {
        let tot = (*x + *y) as f64;
        if tot == 0.0 {
            continue;
        }
        let ea = tot * na / n;
        let eb = tot * nb / n;
        stat += (*x as f64 - ea).powi(2) / ea + (*y as f64 - eb).powi(2) / eb;
        cells += 1;
    }
    let df = cells.saturating_sub(1) as f64;
    TestResult { statistic: stat, df, p_value: chi2_sf(stat, df) }
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // the alternating series converges slowly here; use the dual form
        let s: f64 = (1..=50)
            .map(|k| {
                let k = (2 * k - 1) as f64;
                (-(k * k) * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
            })
            .sum();
        return 1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return TestResult { statistic: 0.0, df: 0.0, p_value: 1.0 };
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let en = ((na * nb) as f64 / (na + nb) as f64).sqrt();
    // Stephens' small-sample correction
    let lambda = (en + 0.12 + 0.11 / en) * d;
    TestResult { statistic: d, df: 0.0, p_value: kolmogorov_sf(lambda) }
}

/// Ordinary least squares line `y = a + b x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub n: usize,
}

impl LineFit {
    pub fn slope_ci(&self) -> (f64, f64) {
        (self.slope - Z95 * self.slope_se, self.slope + Z95 * self.slope_se)
    }
}

/// Weighted least squares with weights `w` (use ones for plain OLS). The
/// slope standard error uses the residual variance.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n || w.len() != n {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (c - intercept - slope * a).powi(2)).sum();
    let sigma2 = rss / (n - 2) as f64;
    Some(LineFit { intercept, slope, slope_se: (sigma2 / sxx).sqrt(), n })
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    weighted_line_fit(x, y, &vec![1.0; x.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_acc_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.5).collect();
        let all = MeanAcc::from_iter(xs.iter().copied());
        let mut a = MeanAcc::from_iter(xs[..40].iter().copied());
        a.merge(&MeanAcc::from_iter(xs[40..].iter().copied()));
        assert!((all.mean - a.mean).abs() < 1e-12);
        assert!((all.variance() - a.variance()).abs() < 1e-10);
    }

    #[test]
    fn wilson_contains_point_and_stays_in_unit_interval() {
        let (lo, hi) = wilson_interval(0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((lo - 0.4038).abs() < 1e-3);
    }

    #[test]
    fn kolmogorov_reference_values() {
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
        assert!((kolmogorov_sf(0.5) - 0.9639).abs() < 1e-3);
        assert!((kolmogorov_sf(0.25) - 0.999_99).abs() < 1e-3);
    }

    #[test]
    fn ks_detects_shift() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).p_value < 1e-6);
        assert!(ks_two_sample(&a, &a).p_value > 0.99);
    }

    #[test]
    fn chi_square_reference() {
        // uniform die, perfect counts
        let r = chi_square_gof(&[10, 10, 10, 10, 10, 10], &[1.0 / 6.0; 6], 5.0);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = chi_square_gof(&[20, 0], &[0.5, 0.5], 1.0);
        assert!(r.p_value < 1e-4);
        let r = chi_square_homogeneity(&[30, 70], &[30, 70]);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn line_fit_exact() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = line_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-12);
    }
}
