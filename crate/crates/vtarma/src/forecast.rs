//! One-step-ahead conditional value-at-risk: in-sample forecasts from a
//! fitted model and rolling out-of-sample backtests with exception
//! counting.
//!
//! Backtest refits use the semi-parametric route: a copula fit on the
//! moving window's pseudo-observations, with the return-scale quantile
//! taken from the window's empirical distribution. Refits and forecast
//! origins are independent tasks and run in parallel; results are
//! assembled in time order.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::estimate::{fit_copula, pseudo_obs, VtKind};
use crate::model::VtArmaModel;
use crate::par;

/// One-step forecast at time `t`: the conditional driver mean and the VaR
/// estimates per requested level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastRow {
    /// Time index (1-based) of the observation being forecast.
    pub t: usize,
    /// Conditional mean of the normalized volatility proxy.
    pub mu_t: f64,
    /// Value-at-risk per level, on the loss scale (positive numbers).
    pub var: Vec<f64>,
}

/// In-sample one-step VaR forecasts for every time point of a series
/// under a fitted model with margin.
///
/// The Kalman filter runs once over the whole series; the per-time
/// quantile solves are independent and parallel.
pub fn forecast_in_sample(
    model: &VtArmaModel,
    x: &[f64],
    levels: &[f64],
) -> Result<Vec<ForecastRow>> {
    check_levels(levels)?;
    let margin = model
        .margin
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("forecasting requires a marginal model".into()))?;
    if x.is_empty() {
        return Err(Error::Data("empty series".into()));
    }
    let u: Vec<f64> = x.iter().map(|&xt| margin.cdf(xt)).collect();
    let z = model.proxy_scores(&u)?;
    let filter = model.arma.kalman_loglik(&z)?;
    let sigma_eps = model.arma.innovation_variance().sqrt();

    let rows = par::map_range(x.len(), |t| {
        let state = crate::model::ConditionalState {
            mu_t: filter.cond_means[t],
            sigma_eps,
        };
        let var = levels
            .iter()
            .map(|&level| model.conditional_var(&state, level))
            .collect::<Result<Vec<f64>>>()?;
        Ok(ForecastRow {
            t: t + 1,
            mu_t: state.mu_t,
            var,
        })
    });
    rows.into_iter().collect()
}

/// Configuration of a rolling backtest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Length of the moving estimation window.
    pub window: usize,
    /// Refit cadence in steps (1 = refit daily).
    pub refit_every: usize,
    /// VaR confidence levels, e.g. 0.95 and 0.99.
    pub levels: Vec<f64>,
    /// V-transform kind of the refitted copula model.
    pub vt_kind: VtKind,
    /// ARMA order of the refitted copula model.
    pub order: (usize, usize),
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 1000,
            refit_every: 1,
            levels: vec![0.95, 0.99],
            vt_kind: VtKind::TwoParam,
            order: (1, 1),
        }
    }
}

/// Exception summary for one VaR level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestLevel {
    pub level: f64,
    pub exceptions: usize,
    pub expected: f64,
    /// Two-sided exact binomial p-value for the exception count.
    pub p_value: f64,
}

/// Output of a rolling backtest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    /// Index of the first forecast origin (= window length).
    pub first_origin: usize,
    /// VaR per forecast origin and level, time-ordered.
    pub var: Vec<Vec<f64>>,
    /// Exception flags per forecast origin and level.
    pub exceeded: Vec<Vec<bool>>,
    /// Per-level exception summaries.
    pub levels: Vec<BacktestLevel>,
    /// Origins whose scheduled refit failed (the previous model was kept).
    pub refit_failures: Vec<usize>,
}

/// Rolling out-of-sample backtest: refit on each moving window (at the
/// configured cadence), forecast one-step VaR and count exceptions.
///
/// Refits are warm-started from a preliminary fit of the first window, so
/// they stay independent and can run in parallel.
pub fn rolling_backtest(x: &[f64], config: &BacktestConfig) -> Result<BacktestReport> {
    check_levels(&config.levels)?;
    let window = config.window;
    let n = x.len();
    if window >= n {
        return Err(Error::Data(format!(
            "window of {window} needs more than {window} observations, got {n}"
        )));
    }
    if config.refit_every == 0 {
        return Err(Error::Data("refit cadence must be at least 1".into()));
    }
    let horizon = n - window;
    let cadence = config.refit_every;
    let n_refits = horizon.div_ceil(cadence);

    let preliminary = fit_copula(
        &pseudo_obs(&x[..window])?,
        config.vt_kind,
        config.order,
        None,
    )?;

    let refit_results: Vec<Result<VtArmaModel>> = par::map_range(n_refits, |r| {
        let start = r * cadence;
        let u = pseudo_obs(&x[start..start + window])?;
        Ok(fit_copula(u.as_slice(), config.vt_kind, config.order, Some(&preliminary.model))?.model)
    });

    // Failed refits fall back to the latest successful model.
    let mut models: Vec<VtArmaModel> = Vec::with_capacity(n_refits);
    let mut refit_failures = Vec::new();
    let mut current = preliminary.model.clone();
    for (r, result) in refit_results.into_iter().enumerate() {
        match result {
            Ok(model) => current = model,
            Err(_) => refit_failures.push(window + r * cadence),
        }
        models.push(current.clone());
    }

    let forecasts: Vec<Result<Vec<f64>>> = par::map_range(horizon, |i| {
        let t = window + i;
        let model = &models[i / cadence];
        let current_window = &x[t - window..t];
        let u_hist = pseudo_obs(current_window)?;
        let state = model.conditional_state(&u_hist)?;
        let mut sorted = current_window.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite returns"));
        config
            .levels
            .iter()
            .map(|&level| {
                let u_psi = model.cond_quantile_pit(&state, 1.0 - level)?;
                Ok(-empirical_quantile(&sorted, u_psi))
            })
            .collect()
    });

    let mut var = Vec::with_capacity(horizon);
    let mut exceeded = Vec::with_capacity(horizon);
    for (i, row) in forecasts.into_iter().enumerate() {
        let row = row?;
        let actual = x[window + i];
        exceeded.push(row.iter().map(|&v| actual < -v).collect());
        var.push(row);
    }

    let levels = config
        .levels
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let exceptions = exceeded.iter().filter(|flags: &&Vec<bool>| flags[j]).count();
            let psi = 1.0 - level;
            BacktestLevel {
                level,
                exceptions,
                expected: psi * horizon as f64,
                p_value: binomial_two_sided(exceptions, horizon, psi),
            }
        })
        .collect();

    Ok(BacktestReport {
        first_origin: window,
        var,
        exceeded,
        levels,
        refit_failures,
    })
}

/// Empirical quantile with the `(n+1)`-scaled convention used for the
/// pseudo-observations: rank `u (n+1)` with linear interpolation between
/// order statistics.
pub fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let rank = u.clamp(0.0, 1.0) * (n as f64 + 1.0);
    if rank <= 1.0 {
        return sorted[0];
    }
    if rank >= n as f64 {
        return sorted[n - 1];
    }
    let lower = rank.floor() as usize; // 1-based rank of the lower order stat
    let frac = rank - lower as f64;
    sorted[lower - 1] + frac * (sorted[lower] - sorted[lower - 1])
}

/// Two-sided exact binomial p-value for observing `k` successes out of
/// `n` with success probability `p`.
pub fn binomial_two_sided(k: usize, n: usize, p: f64) -> f64 {
    let dist = Binomial::new(p, n as u64).expect("valid binomial");
    let lower = dist.cdf(k as u64);
    let upper = if k == 0 {
        1.0
    } else {
        1.0 - dist.cdf(k as u64 - 1)
    };
    (2.0 * lower.min(upper)).min(1.0)
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Data("need at least one VaR level".into()));
    }
    for &level in levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!(
                "VaR level must lie in (0,1), got {level}"
            )));
        }
    }
    Ok(())
}
