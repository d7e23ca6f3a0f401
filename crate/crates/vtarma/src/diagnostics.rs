//! Residual diagnostics: autocorrelations, Ljung-Box portmanteau tests, a
//! moment-based normality test, QQ-plot data and a Kolmogorov-Smirnov
//! uniformity test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numeric::{ks_pvalue, ks_statistic_uniform, norm_quantile};

/// A scalar test statistic with its p-value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Diagnostics bundle for a residual series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Test name -> statistic and p-value.
    pub tests: BTreeMap<String, TestResult>,
    /// Sample autocorrelations of the residuals, lags 1..=20.
    pub acf_residuals: Vec<f64>,
    /// Sample autocorrelations of the absolute residuals, lags 1..=20.
    pub acf_abs_residuals: Vec<f64>,
    /// QQ-plot pairs (theoretical normal quantile, ordered residual).
    pub qq: Vec<(f64, f64)>,
}

/// Sample autocorrelations at lags `1..=max_lag`.
pub fn sample_acf(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    assert!(max_lag < n, "need more observations than lags");
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
    (1..=max_lag)
        .map(|k| {
            let mut acc = 0.0;
            for t in k..n {
                acc += (series[t] - mean) * (series[t - k] - mean);
            }
            acc / denom
        })
        .collect()
}

/// Ljung-Box portmanteau test for autocorrelation up to `lags`.
pub fn ljung_box(series: &[f64], lags: usize) -> Result<TestResult> {
    let n = series.len();
    if n < lags + 2 {
        return Err(Error::Data(format!(
            "series of length {n} is too short for {lags} lags"
        )));
    }
    check_not_degenerate(series)?;
    let acf = sample_acf(series, lags);
    let mut statistic = 0.0;
    for (k, rho) in acf.iter().enumerate() {
        statistic += rho * rho / (n - k - 1) as f64;
    }
    statistic *= n as f64 * (n as f64 + 2.0);
    let chi = ChiSquared::new(lags as f64).expect("positive dof");
    Ok(TestResult {
        statistic,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

/// Moment-based normality test from sample skewness and excess kurtosis
/// (chi-squared with two degrees of freedom).
pub fn normality_moments(series: &[f64]) -> Result<TestResult> {
    let n = series.len();
    if n < 8 {
        return Err(Error::Data("too few observations for a normality test".into()));
    }
    check_not_degenerate(series)?;
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in series {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let statistic = nf / 6.0 * (skewness * skewness + 0.25 * excess_kurtosis * excess_kurtosis);
    let chi = ChiSquared::new(2.0).expect("positive dof");
    Ok(TestResult {
        statistic,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

/// Kolmogorov-Smirnov test of a sample against the uniform law on (0,1).
pub fn ks_uniform(sample: &[f64]) -> Result<TestResult> {
    if sample.is_empty() {
        return Err(Error::Data("empty sample".into()));
    }
    let statistic = ks_statistic_uniform(sample);
    Ok(TestResult {
        statistic,
        p_value: ks_pvalue(statistic, sample.len()),
    })
}

/// QQ-plot data: theoretical standard normal quantiles at the plotting
/// positions `(i - 0.5)/n` against the ordered sample.
pub fn qq_normal_pairs(series: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let n = sorted.len();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, r)| (norm_quantile((i as f64 + 0.5) / n as f64), r))
        .collect()
}

/// Full diagnostics bundle for a residual series: Ljung-Box on the
/// residuals and their absolute values at lags 10 and 20, the moment-based
/// normality test, autocorrelation arrays and QQ data.
pub fn diagnose_residuals(residuals: &[f64]) -> Result<DiagnosticsReport> {
    check_not_degenerate(residuals)?;
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    let mut tests = BTreeMap::new();
    for lags in [10usize, 20] {
        tests.insert(format!("ljung_box_resid_{lags}"), ljung_box(residuals, lags)?);
        tests.insert(format!("ljung_box_abs_resid_{lags}"), ljung_box(&abs, lags)?);
    }
    tests.insert("normality_moments".to_string(), normality_moments(residuals)?);
    Ok(DiagnosticsReport {
        tests,
        acf_residuals: sample_acf(residuals, 20),
        acf_abs_residuals: sample_acf(&abs, 20),
        qq: qq_normal_pairs(residuals),
    })
}

fn check_not_degenerate(series: &[f64]) -> Result<()> {
    if let Some(bad) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value at index {bad}")));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::Degenerate("constant series".into()));
    }
    Ok(())
}
