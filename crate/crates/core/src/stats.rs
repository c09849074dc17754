//! Small descriptive-statistics and Normal-distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    sample_covariance(xs, xs)
}

/// Sample covariance with denominator `n - 1`.
pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Population (denominator `n`) variance, used for enumeration oracles.
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// `z_{1 - alpha/2}` of the standard Normal.
pub fn normal_critical(alpha: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided p-value `P(|Z| >= |z|)`.
pub fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Binomial coefficient, `None` on `u128` overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Multinomial coefficient `n! / (q_1! ... q_k!)` with `n = sum(q)`.
pub fn multinomial(parts: &[usize]) -> Option<u128> {
    let mut remaining: u64 = parts.iter().map(|&q| q as u64).sum();
    let mut acc: u128 = 1;
    for &q in parts {
        acc = acc.checked_mul(binomial(remaining, q as u64)?)?;
        remaining -= q as u64;
    }
    Some(acc)
}
