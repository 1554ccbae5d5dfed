//! Small statistical helpers: two-sample tests, least squares and a
//! divergence heuristic for partial sums.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction of the scaling).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    if a.is_empty() || b.is_empty() {
        return TestResult {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_tail((en + 0.12 + 0.11 / en) * d),
    }
}

/// One-sided Mann-Whitney U test of "x tends to exceed y", normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> TestResult {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    if x.is_empty() || y.is_empty() {
        return TestResult {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let mut pooled: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = pooled.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j < total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        let count = (j - i) as f64;
        tie_term += count * count * count - count;
        rank_sum_x += avg_rank * pooled[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let u = rank_sum_x - n1 * (n1 + 1.0) / 2.0;
    let nn = n1 + n2;
    let variance = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if variance <= 0.0 {
        return TestResult {
            statistic: u,
            p_value: 1.0,
        };
    }
    let z = (u - n1 * n2 / 2.0 - 0.5) / variance.sqrt();
    let normal = Normal::standard();
    TestResult {
        statistic: u,
        p_value: 1.0 - normal.cdf(z),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); 0 for fewer than 2 values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

/// Growth diagnostics for the partial sums of a nonnegative series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEvidence {
    /// `(N, sum_{i <= N} a_i)` at each checkpoint.
    pub partial_sums: Vec<(u64, f64)>,
    /// Partial sums against `ln N`.
    pub log_fit: LinearFit,
    /// `ln S(N)` against `ln N`; the slope is the growth exponent.
    pub power_fit: LinearFit,
    /// Increment over the last checkpoint interval divided by the previous one.
    pub last_increment_ratio: f64,
    pub divergent: bool,
}

/// Ratio below which shrinking decade increments read as convergence.
/// `sum 1/i^p` has decade ratio `10^(1-p)`, so this accepts `p < ~1.05`.
pub const DIVERGENCE_RATIO: f64 = 0.9;

/// Sums `term(i)` for `i = 1..=max(checkpoints)` and judges divergence from
/// the increments between the last checkpoints.
pub fn divergence_evidence<F: FnMut(u64) -> f64>(checkpoints: &[u64], mut term: F) -> DivergenceEvidence {
    let mut checkpoints = checkpoints.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut partial_sums = Vec::with_capacity(checkpoints.len());
    let mut sum = 0.0;
    let mut i = 0;
    for &n in &checkpoints {
        while i < n {
            i += 1;
            sum += term(i);
        }
        partial_sums.push((n, sum));
    }
    let ln_n: Vec<f64> = partial_sums.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let sums: Vec<f64> = partial_sums.iter().map(|p| p.1).collect();
    let log_fit = linear_fit(&ln_n, &sums);
    let positive: Vec<(f64, f64)> = ln_n
        .iter()
        .zip(&sums)
        .filter(|(_, s)| **s > 0.0)
        .map(|(x, s)| (*x, s.ln()))
        .collect();
    let power_fit = if positive.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        linear_fit(&x, &y)
    } else {
        LinearFit {
            slope: 0.0,
            intercept: 0.0,
            r_squared: 0.0,
        }
    };
    let k = sums.len();
    let last_increment_ratio = if k >= 3 {
        let last = sums[k - 1] - sums[k - 2];
        let prev = sums[k - 2] - sums[k - 3];
        if prev > 0.0 {
            last / prev
        } else if last > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        f64::NAN
    };
    let divergent = last_increment_ratio >= DIVERGENCE_RATIO && sums.last().is_some_and(|s| *s > 0.0);
    DivergenceEvidence {
        partial_sums,
        log_fit,
        power_fit,
        last_increment_ratio,
        divergent,
    }
}

/// `10^2, 10^3, ...` up to and including `horizon` (which is appended when it
/// is not a power of ten).
pub fn decade_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = 100;
    while n <= horizon {
        out.push(n);
        n *= 10;
    }
    if out.last() != Some(&horizon) && horizon > 0 {
        out.push(horizon);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_tail_known_values() {
        // P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert_relative_eq!(kolmogorov_tail(1.3581), 0.05, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_tail(1.6276), 0.01, epsilon = 1e-4);
        assert_eq!(kolmogorov_tail(0.0), 1.0);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..500).map(f64::from).collect();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        let b: Vec<f64> = (1000..1500).map(f64::from).collect();
        let r = ks_two_sample(&a, &b);
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn mann_whitney_separated_samples() {
        let x = [10.0, 11.0, 12.0, 13.0, 14.0];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = mann_whitney_greater(&x, &y);
        assert_eq!(r.statistic, 25.0);
        assert!(r.p_value < 0.01);
        assert!(mann_whitney_greater(&y, &x).p_value > 0.99);
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y);
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_series_is_divergent_and_squares_are_not() {
        let cps = decade_checkpoints(100_000);
        let h = divergence_evidence(&cps, |i| 1.0 / i as f64);
        assert!(h.divergent);
        assert!(h.log_fit.r_squared > 0.999);
        let s = divergence_evidence(&cps, |i| 1.0 / (i as f64 * i as f64));
        assert!(!s.divergent);
        let z = divergence_evidence(&cps, |_| 0.0);
        assert!(!z.divergent);
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_relative_eq!(std_dev(&[1.0, 2.0, 3.0]), 1.0, epsilon = 1e-15);
    }
}
