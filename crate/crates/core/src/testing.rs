//! Shared statistical machinery: empirical summaries, Kolmogorov-Smirnov and
//! chi-square tests with p-values, and small regression helpers.
//!
//! Every test here is used with seeded data, so a pass/fail outcome is a
//! deterministic property of (config, seed).

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares slope of `y` against `x`.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, y) in points {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Survival function of the asymptotic Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_q(d * (sq + 0.12 + 0.11 / sq))
}

/// One-sample KS test against a continuous CDF. Returns `(D, p)`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> (f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    (d, ks_p_value(d, n))
}

/// Two-sample KS test. Returns `(D, p)` with the effective-size p-value.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    (d, ks_p_value(d, n_eff))
}

/// Chi-square p-value for a statistic with `dof` degrees of freedom.
pub fn chi2_p(stat: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Chi-square goodness-of-fit of observed counts against cell
/// probabilities. Cells with expected count below `min_expected` are pooled
/// into their neighbour to keep the asymptotics honest. Returns `(stat, p)`.
pub fn chi2_gof(observed: &[u64], probs: &[f64], total: u64, min_expected: f64) -> (f64, f64) {
    assert_eq!(observed.len(), probs.len());
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (obs, expected)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        acc_o += o as f64;
        acc_e += p * total as f64;
        if acc_e >= min_expected {
            cells.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        if let Some(last) = cells.last_mut() {
            last.0 += acc_o;
            last.1 += acc_e;
        } else {
            cells.push((acc_o, acc_e));
        }
    }
    let stat: f64 = cells
        .iter()
        .filter(|c| c.1 > 0.0)
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = cells.len().saturating_sub(1) as f64;
    (stat, chi2_p(stat, dof))
}

/// Poisson pmf cells `0..=k_max` plus the right tail, for chi-square tests.
pub fn poisson_cells(mean: f64, k_max: usize) -> Vec<f64> {
    let mut probs = Vec::with_capacity(k_max + 2);
    let mut p = (-mean).exp();
    let mut acc = 0.0;
    for k in 0..=k_max {
        probs.push(p);
        acc += p;
        p *= mean / (k as f64 + 1.0);
    }
    probs.push((1.0 - acc).max(0.0));
    probs
}

/// Normal-approximation confidence half-width for a proportion.
pub fn proportion_half_width(p_hat: f64, n: usize, z: f64) -> f64 {
    z * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn summaries() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(mean(&xs), 2.5);
        assert_abs_diff_eq!(variance(&xs), 5.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn slope_exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 + 2.0 * i as f64)).collect();
        assert_abs_diff_eq!(slope(&pts), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ks_two_sample_known_value() {
        // Frozen small case: D = 0.25 for these samples.
        let xs = vec![1.0, 1.0, 4.0, 4.0];
        let ys = vec![1.0, 1.0, 1.0, 4.0];
        let (d, _) = ks_two_sample(&xs, &ys);
        assert_abs_diff_eq!(d, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn ks_uniform_accepts_uniform() {
        let mut s = Stream::keyed(42, 0, 0, 0);
        let xs: Vec<f64> = (0..5000).map(|_| s.next_f64()).collect();
        let (_, p) = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "p={p}");
    }

    #[test]
    fn ks_rejects_wrong_law() {
        let mut s = Stream::keyed(42, 0, 0, 0);
        let xs: Vec<f64> = (0..5000).map(|_| s.next_f64().powi(2)).collect();
        let (_, p) = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(p < 1e-6, "p={p}");
    }

    #[test]
    fn chi2_accepts_poisson() {
        let mut s = Stream::keyed(9, 0, 0, 0);
        let mean = 2.0;
        let mut counts = vec![0u64; 12];
        let n = 10_000;
        for _ in 0..n {
            let k = (s.poisson(mean) as usize).min(11);
            counts[k] += 1;
        }
        let probs = poisson_cells(mean, 10);
        let (_, p) = chi2_gof(&counts, &probs, n, 5.0);
        assert!(p > 0.01, "p={p}");
    }

    #[test]
    fn chi2_rejects_wrong_mean() {
        let mut s = Stream::keyed(9, 0, 0, 0);
        let mut counts = vec![0u64; 12];
        let n = 10_000;
        for _ in 0..n {
            let k = (s.poisson(2.5) as usize).min(11);
            counts[k] += 1;
        }
        let probs = poisson_cells(2.0, 10);
        let (_, p) = chi2_gof(&counts, &probs, n, 5.0);
        assert!(p < 1e-6, "p={p}");
    }

    #[test]
    fn kolmogorov_q_endpoints() {
        assert_eq!(kolmogorov_q(0.0), 1.0);
        assert!(kolmogorov_q(0.5) > 0.9);
        assert!(kolmogorov_q(2.0) < 1e-3);
    }
}
