//! Small statistical helpers: Kolmogorov–Smirnov tests and long-run
//! variance estimation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * x * x).exp();
        sum += if (j as i64) % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against the continuous CDF `cdf`.
/// The p-value uses Stephens' finite-sample correction.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Option<KsResult> {
    if samples.is_empty() {
        return None;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    Some(KsResult {
        n: xs.len(),
        statistic: d,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
    })
}

/// KS test against the exponential law with the given rate.
pub fn ks_exponential(samples: &[f64], rate: f64) -> Option<KsResult> {
    ks_test(samples, |x| if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() })
}

/// Bartlett-weighted long-run variance `γ0 + 2 Σ_{l=1}^{L} (1 - l/(L+1)) γ_l`
/// of a series already centred by the caller. Autocovariances are divided by
/// the series length.
pub fn newey_west(series: &[f64], lag: usize) -> f64 {
    let n = series.len();
    if n == 0 {
        return 0.0;
    }
    let gamma = |l: usize| -> f64 {
        series[l..]
            .iter()
            .zip(series)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let mut v = gamma(0);
    for l in 1..=lag.min(n - 1) {
        v += 2.0 * (1.0 - l as f64 / (lag as f64 + 1.0)) * gamma(l);
    }
    v.max(0.0)
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    (xs.len() > 1).then(|| xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_reference_values() {
        // 1.358 is the classical 5% critical value, 1.628 the 1% one.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 2e-4);
    }

    #[test]
    fn ks_uniform_grid_is_perfect_fit() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_test(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn ks_detects_wrong_rate() {
        let n = 2000;
        let xs: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        assert!(ks_exponential(&xs, 1.0).unwrap().p_value > 0.5);
        assert!(ks_exponential(&xs, 2.0).unwrap().p_value < 1e-6);
    }

    #[test]
    fn newey_west_white_noise_and_lag_zero() {
        let xs = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(newey_west(&xs, 0), 1.0);
        // Alternating series: negative autocorrelation shrinks the estimate.
        assert!(newey_west(&xs, 1) < 1.0);
    }
}
