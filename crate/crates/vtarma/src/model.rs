//! The composite VT-ARMA process: a v-transform, a unit-variance Gaussian
//! ARMA driver for the volatility PIT process and an optional marginal
//! distribution.
//!
//! Without a margin the model lives on the copula (PIT) scale; the margin
//! adds the return scale. Simulation follows the stochastic-inversion
//! construction: simulate the driver, map to the volatility PIT series,
//! stochastically invert to the series PIT and apply the marginal quantile.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::arma::ArmaSpec;
use crate::copula::proxy_z;
use crate::error::{Error, Result};
use crate::margins::MarginSpec;
use crate::numeric::{adaptive_simpson, ln_norm_pdf, norm_cdf};
use crate::vtransform::VTransform;

/// Absolute tolerance for the conditional-cdf quadrature.
const COND_CDF_TOL: f64 = 1e-9;

/// A VT-ARMA model; `margin: None` restricts the model to the PIT scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VtArmaModel {
    pub vt: VTransform,
    pub arma: ArmaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<MarginSpec>,
}

/// Conditional state of the driver at one time point: the one-step mean of
/// `Z_t` given the history and the (constant) innovation standard
/// deviation.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalState {
    pub mu_t: f64,
    pub sigma_eps: f64,
}

/// Output of a simulation run: the return series (when a margin is
/// attached) plus the PIT and driver diagnostics series.
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Returns `x_t = F_X^{-1}(u_t)`; `None` without a margin.
    pub x: Option<Vec<f64>>,
    /// Series PIT process.
    pub u: Vec<f64>,
    /// Volatility PIT process.
    pub v: Vec<f64>,
    /// Normalized volatility proxy (the ARMA driver path).
    pub z: Vec<f64>,
}

impl VtArmaModel {
    pub fn new(vt: VTransform, arma: ArmaSpec) -> Self {
        Self {
            vt,
            arma,
            margin: None,
        }
    }

    pub fn with_margin(vt: VTransform, arma: ArmaSpec, margin: MarginSpec) -> Self {
        Self {
            vt,
            arma,
            margin: Some(margin),
        }
    }

    fn margin_required(&self) -> Result<&MarginSpec> {
        self.margin
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("operation requires a marginal model".into()))
    }

    /// Normalized volatility proxy scores `z_t = Phi^{-1}(V(u_t))`.
    ///
    /// Rejects inputs that are non-finite (or map to non-finite scores
    /// after the boundary clamp), naming the offending index.
    pub fn proxy_scores(&self, u: &[f64]) -> Result<Vec<f64>> {
        u.iter()
            .enumerate()
            .map(|(t, &ut)| {
                if !(ut.is_finite() && (0.0..=1.0).contains(&ut)) {
                    return Err(Error::Data(format!(
                        "PIT observation out of [0,1] at index {t}: {ut}"
                    )));
                }
                let z = proxy_z(&self.vt, ut);
                if !z.is_finite() {
                    return Err(Error::Data(format!(
                        "proxy score is non-finite at index {t}"
                    )));
                }
                Ok(z)
            })
            .collect()
    }

    /// Simulates `n` steps of the process.
    pub fn simulate(&self, n: usize, seed: u64) -> SimOutput {
        let mut rng = StdRng::seed_from_u64(seed);
        let z = self.arma.simulate_with_rng(n, &mut rng);
        let v: Vec<f64> = z.iter().map(|&zt| norm_cdf(zt)).collect();
        let u: Vec<f64> = v
            .iter()
            .map(|&vt| self.vt.stochastic_invert(vt, rng.random()))
            .collect();
        let x = self
            .margin
            .as_ref()
            .map(|m| u.iter().map(|&ut| m.quantile_unchecked(ut)).collect());
        SimOutput { x, u, v, z }
    }

    /// Log-likelihood of the copula process for PIT data: the constrained
    /// ARMA log-likelihood of the proxy scores minus the sum of their
    /// standard normal log-densities. Identically zero for a white-noise
    /// driver.
    pub fn copula_loglik(&self, u: &[f64]) -> Result<f64> {
        let z = self.proxy_scores(u)?;
        let driver = self.arma.kalman_loglik(&z)?.loglik;
        let jacobian: f64 = z.iter().map(|&zt| ln_norm_pdf(zt)).sum();
        Ok(driver - jacobian)
    }

    /// Full log-likelihood for return data: the iid marginal term plus the
    /// copula term at the parametric PITs.
    pub fn full_loglik(&self, x: &[f64]) -> Result<f64> {
        let margin = self.margin_required()?;
        let marginal: f64 = x.iter().map(|&xt| margin.ln_pdf(xt)).sum();
        let u: Vec<f64> = x.iter().map(|&xt| margin.cdf(xt)).collect();
        Ok(marginal + self.copula_loglik(&u)?)
    }

    /// Conditional state given a PIT history (empty history gives the
    /// stationary state).
    pub fn conditional_state(&self, u_history: &[f64]) -> Result<ConditionalState> {
        let z = self.proxy_scores(u_history)?;
        Ok(ConditionalState {
            mu_t: self.arma.one_step_mean(&z)?,
            sigma_eps: self.arma.innovation_variance().sqrt(),
        })
    }

    /// Conditional state given a return history (margin required).
    pub fn conditional_state_from_returns(&self, x_history: &[f64]) -> Result<ConditionalState> {
        let margin = self.margin_required()?;
        let u: Vec<f64> = x_history.iter().map(|&xt| margin.cdf(xt)).collect();
        self.conditional_state(&u)
    }

    /// One-step conditional density of the PIT process,
    /// `phi((z_u - mu_t)/sigma_eps) / (sigma_eps phi(z_u))` with
    /// `z_u = Phi^{-1}(V(u))`. Reduces to the uniform density for a
    /// white-noise driver.
    pub fn cond_density_pit(&self, state: &ConditionalState, u: f64) -> f64 {
        let z = proxy_z(&self.vt, u);
        let standardized = (z - state.mu_t) / state.sigma_eps;
        (ln_norm_pdf(standardized) - state.sigma_eps.ln() - ln_norm_pdf(z)).exp()
    }

    /// One-step conditional density on the return scale,
    /// `f_X(x) f_{U|history}(F_X(x))`.
    pub fn cond_density(&self, state: &ConditionalState, x: f64) -> Result<f64> {
        let margin = self.margin_required()?;
        Ok(margin.pdf(x) * self.cond_density_pit(state, margin.cdf(x)))
    }

    /// One-step conditional distribution function of the PIT process by
    /// adaptive quadrature of the conditional density, split at the
    /// fulcrum where the density can kink or spike.
    pub fn cond_cdf_pit(&self, state: &ConditionalState, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("PIT point must lie in [0,1], got {u}")));
        }
        let delta = self.vt.delta();
        let f = |t: f64| self.cond_density_pit(state, t);
        let mass = if u <= delta {
            adaptive_simpson(&f, 0.0, u, COND_CDF_TOL)
        } else {
            adaptive_simpson(&f, 0.0, delta, COND_CDF_TOL)
                + adaptive_simpson(&f, delta, u, COND_CDF_TOL)
        };
        if !mass.is_finite() {
            return Err(Error::Numeric("conditional cdf quadrature diverged".into()));
        }
        Ok(mass.clamp(0.0, 1.0))
    }

    /// Conditional quantile on the PIT scale: solves
    /// `psi = F_{U|history}(u)` by bisection to 1e-8 in `u`.
    pub fn cond_quantile_pit(&self, state: &ConditionalState, psi: f64) -> Result<f64> {
        if !(psi > 0.0 && psi < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0,1), got {psi}"
            )));
        }
        // The total mass can deviate from one by quadrature error; scale
        // the target so the round trip stays consistent.
        let total = self.cond_cdf_pit(state, 1.0)?;
        let target = psi * total;
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut flo = -target;
        for _ in 0..60 {
            if hi - lo < 1e-9 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let fm = self.cond_cdf_pit(state, mid)? - target;
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Conditional quantile on the return scale: the PIT quantile mapped
    /// through the marginal quantile function.
    pub fn cond_quantile(&self, state: &ConditionalState, psi: f64) -> Result<f64> {
        let margin = self.margin_required()?;
        let u = self.cond_quantile_pit(state, psi)?;
        margin.quantile(u.clamp(1e-12, 1.0 - 1e-12))
    }

    /// Conditional value-at-risk at the given confidence `level` (e.g.
    /// 0.95): the negative of the lower `1 - level` conditional quantile.
    pub fn conditional_var(&self, state: &ConditionalState, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!(
                "VaR level must lie in (0,1), got {level}"
            )));
        }
        Ok(-self.cond_quantile(state, 1.0 - level)?)
    }

    /// Kalman residuals of PIT data: `r_t = z_t - mu_hat_t` with
    /// `z_t = Phi^{-1}(V(u_t))` and the conditional means from the filter.
    /// For a fitted model these should behave like an iid Gaussian sample
    /// with variance `sigma_eps^2`.
    pub fn residuals_pit(&self, u: &[f64]) -> Result<Vec<f64>> {
        let z = self.proxy_scores(u)?;
        let output = self.arma.kalman_loglik(&z)?;
        Ok(z.iter()
            .zip(&output.cond_means)
            .map(|(zt, mu)| zt - mu)
            .collect())
    }

    /// Kalman residuals of return data through the parametric margin.
    pub fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let margin = self.margin_required()?;
        let u: Vec<f64> = x.iter().map(|&xt| margin.cdf(xt)).collect();
        self.residuals_pit(&u)
    }

    /// The implied volatility proxy transformation on the return scale,
    /// `T(x) = Phi^{-1}(V(F_X(x)))`: decreasing left of the change point,
    /// increasing right of it.
    pub fn proxy_transform(&self, x: f64) -> Result<f64> {
        let margin = self.margin_required()?;
        Ok(proxy_z(&self.vt, margin.cdf(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::bivariate_gauss_copula_density;
    use crate::numeric::{ks_pvalue, ks_statistic_uniform, norm_quantile};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn fig3_model() -> VtArmaModel {
        VtArmaModel::new(
            VTransform::three_param(0.5, 0.9, 1.1).unwrap(),
            ArmaSpec::new(vec![0.95], vec![-0.85]).unwrap(),
        )
    }

    fn sample_acf(series: &[f64], max_lag: usize) -> Vec<f64> {
        let n = series.len();
        let mean = series.iter().sum::<f64>() / n as f64;
        let var: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
        (1..=max_lag)
            .map(|k| {
                let mut acc = 0.0;
                for t in k..n {
                    acc += (series[t] - mean) * (series[t - k] - mean);
                }
                acc / var
            })
            .collect()
    }

    #[test]
    fn degenerate_model_simulates_iid_uniforms() {
        let model = VtArmaModel::new(
            VTransform::linear(0.5).unwrap(),
            ArmaSpec::white_noise(),
        );
        let out = model.simulate(100_000, 3);
        let d = ks_statistic_uniform(&out.u);
        assert!(ks_pvalue(d, out.u.len()) > 0.01);
        assert!(out.x.is_none());
        // No dependence left in the PIT series.
        let acf = sample_acf(&out.u, 5);
        for rho in acf {
            assert!(rho.abs() < 4.0 / (100_000f64).sqrt());
        }
    }

    #[test]
    fn simulation_shows_volatility_clustering_but_no_serial_correlation() {
        let model = VtArmaModel::with_margin(
            VTransform::linear(0.5).unwrap(),
            ArmaSpec::new(vec![0.95], vec![-0.85]).unwrap(),
            MarginSpec::student(0.0, 1.0, 3.0).unwrap(),
        );
        let n = 20_000;
        let out = model.simulate(n, 12);
        let x = out.x.unwrap();
        let abs_x: Vec<f64> = x.iter().map(|v| v.abs()).collect();

        let acf_abs = sample_acf(&abs_x, 20);
        let band = 2.0 / (n as f64).sqrt();
        let significant = acf_abs.iter().filter(|rho| **rho > band).count();
        assert!(
            significant >= 18,
            "absolute returns should be persistently correlated: {acf_abs:?}"
        );

        let acf_x = sample_acf(&x, 20);
        let wide_band = 2.58 / (n as f64).sqrt();
        let raw_significant = acf_x.iter().filter(|rho| rho.abs() > wide_band).count();
        assert!(
            raw_significant <= 2,
            "raw returns should look like white noise: {acf_x:?}"
        );
    }

    #[test]
    fn simulated_margins_follow_the_marginal_law() {
        let model = VtArmaModel::with_margin(
            VTransform::three_param(0.55, 1.4, 0.65).unwrap(),
            ArmaSpec::new(vec![0.95], vec![-0.85]).unwrap(),
            MarginSpec::laplace(0.3, 2.0).unwrap(),
        );
        let n = 100_000;
        let out = model.simulate(n, 21);
        let x = out.x.unwrap();
        let pit: Vec<f64> = x
            .iter()
            .map(|&v| model.margin.as_ref().unwrap().cdf(v))
            .collect();
        let d = ks_statistic_uniform(&pit);
        assert!(
            ks_pvalue(d, n) > 0.01,
            "simulated returns failed the marginal KS check: D = {d}"
        );
        // The u series is marginally uniform too.
        let d = ks_statistic_uniform(&out.u);
        assert!(ks_pvalue(d, n) > 0.01);
    }

    #[test]
    fn simulation_is_deterministic_given_seed() {
        let model = fig3_model();
        let a = model.simulate(500, 9);
        let b = model.simulate(500, 9);
        assert_eq!(a.u, b.u);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn white_noise_copula_loglik_is_exactly_zero() {
        let model = VtArmaModel::new(
            VTransform::three_param(0.55, 1.4, 0.65).unwrap(),
            ArmaSpec::white_noise(),
        );
        let mut rng = StdRng::seed_from_u64(2);
        let u: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        assert_eq!(model.copula_loglik(&u).unwrap(), 0.0);
    }

    #[test]
    fn copula_loglik_matches_gaussian_copula_composition() {
        // Small-sample oracle: the likelihood equals the log Gaussian
        // copula density built directly from the autocorrelation matrix.
        let model = fig3_model();
        let u = [0.21, 0.77, 0.48, 0.93, 0.35];
        let z = model.proxy_scores(&u).unwrap();
        let acf = model.arma.acf_upto(u.len() - 1);
        let corr = DMatrix::from_fn(u.len(), u.len(), |i, j| acf[i.abs_diff(j)]);
        let expected =
            crate::copula::ln_gauss_copula_density(&corr, &DVector::from_column_slice(&z))
                .unwrap();
        assert_abs_diff_eq!(model.copula_loglik(&u).unwrap(), expected, epsilon = 1e-8);
    }

    #[test]
    fn copula_loglik_prefers_true_parameters() {
        let truth = fig3_model();
        let out = truth.simulate(4000, 33);
        let at_truth = truth.copula_loglik(&out.u).unwrap();
        let mut rng = StdRng::seed_from_u64(101);
        let mut wins = 0;
        let trials = 100;
        for _ in 0..trials {
            let perturbed = VtArmaModel::new(
                VTransform::three_param(
                    (0.5 + rng.random_range(-0.1..0.1f64)).clamp(0.05, 0.95),
                    0.9 * (1.0 + rng.random_range(-0.4..0.4f64)),
                    1.1 * (1.0 + rng.random_range(-0.4..0.4f64)),
                )
                .unwrap(),
                ArmaSpec::new(
                    vec![rng.random_range(0.5..0.99f64)],
                    vec![rng.random_range(-0.95..-0.5f64)],
                )
                .unwrap(),
            );
            if at_truth >= perturbed.copula_loglik(&out.u).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 97, "truth beaten too often: {wins}/{trials}");
    }

    #[test]
    fn full_loglik_splits_into_margin_and_copula_terms() {
        let margin = MarginSpec::laplace(0.1, 1.5).unwrap();
        let model = VtArmaModel::with_margin(
            VTransform::two_param(0.46, 0.92).unwrap(),
            ArmaSpec::new(vec![0.9], vec![-0.8]).unwrap(),
            margin.clone(),
        );
        let x = [0.5, -1.2, 3.8, 0.05, -0.6, 2.2];
        let marginal: f64 = x.iter().map(|&v| margin.ln_pdf(v)).sum();
        let u: Vec<f64> = x.iter().map(|&v| margin.cdf(v)).collect();
        let copula = model.copula_loglik(&u).unwrap();
        assert_abs_diff_eq!(
            model.full_loglik(&x).unwrap(),
            marginal + copula,
            epsilon = 1e-10
        );

        // White-noise driver reduces to the iid marginal log-likelihood.
        let iid = VtArmaModel::with_margin(
            VTransform::linear(0.5).unwrap(),
            ArmaSpec::white_noise(),
            margin.clone(),
        );
        assert_abs_diff_eq!(iid.full_loglik(&x).unwrap(), marginal, epsilon = 1e-12);
    }

    #[test]
    fn full_loglik_prefers_the_true_margin_scale() {
        let margin = MarginSpec::laplace(0.0, 1.0).unwrap();
        let model = VtArmaModel::with_margin(
            VTransform::linear(0.5).unwrap(),
            ArmaSpec::new(vec![0.95], vec![-0.85]).unwrap(),
            margin,
        );
        let x = model.simulate(5000, 44).x.unwrap();
        let misscaled = VtArmaModel {
            margin: Some(MarginSpec::laplace(0.0, 2.5).unwrap()),
            ..model.clone()
        };
        assert!(model.full_loglik(&x).unwrap() > misscaled.full_loglik(&x).unwrap());
    }

    #[test]
    fn white_noise_conditional_density_is_uniform() {
        let model = VtArmaModel::new(
            VTransform::three_param(0.55, 1.4, 0.65).unwrap(),
            ArmaSpec::white_noise(),
        );
        let state = model.conditional_state(&[0.3, 0.8]).unwrap();
        assert_eq!(state.mu_t, 0.0);
        assert_eq!(state.sigma_eps, 1.0);
        for i in 1..50 {
            let u = i as f64 / 50.0;
            assert_abs_diff_eq!(model.cond_density_pit(&state, u), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ar1_conditional_density_equals_pair_copula_density() {
        let alpha = 0.6;
        let model = VtArmaModel::new(
            VTransform::three_param(0.55, 1.4, 0.65).unwrap(),
            ArmaSpec::new(vec![alpha], vec![]).unwrap(),
        );
        let u_prev = 0.82;
        let state = model.conditional_state(&[u_prev]).unwrap();
        assert_abs_diff_eq!(
            state.mu_t,
            alpha * model.proxy_scores(&[u_prev]).unwrap()[0],
            epsilon = 1e-12
        );
        for &u in &[0.05, 0.3, 0.55, 0.7, 0.97] {
            let z_u = model.proxy_scores(&[u]).unwrap()[0];
            let z_prev = model.proxy_scores(&[u_prev]).unwrap()[0];
            let pair = bivariate_gauss_copula_density(z_u, z_prev, alpha);
            assert_abs_diff_eq!(
                model.cond_density_pit(&state, u),
                pair,
                epsilon = 1e-10 * pair.max(1.0)
            );
        }
    }

    #[test]
    fn conditional_density_integrates_to_one() {
        let model = fig3_model();
        let sigma_eps = model.arma.innovation_variance().sqrt();
        for &mu in &[-0.8, -0.2, 0.0, 0.5, 1.2] {
            let state = ConditionalState { mu_t: mu, sigma_eps };
            let mass = model.cond_cdf_pit(&state, 1.0).unwrap();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn conditional_density_is_bimodal_in_high_volatility_states() {
        // Return-scale conditional density with the heavy-tailed skewed
        // margin: two humps either side of the change point when the
        // conditional proxy mean is high, a single mode when it is low.
        let model = VtArmaModel {
            margin: Some(
                MarginSpec::student(0.3, 1.0, 3.0)
                    .unwrap()
                    .with_skew(0.8)
                    .unwrap(),
            ),
            ..fig3_model()
        };
        let sigma_eps = model.arma.innovation_variance().sqrt();
        let count_maxima = |mu_t: f64| {
            let state = ConditionalState { mu_t, sigma_eps };
            let grid = 2001;
            let density: Vec<f64> = (0..grid)
                .map(|i| {
                    let x = -8.0 + 16.0 * i as f64 / (grid - 1) as f64;
                    model.cond_density(&state, x).unwrap()
                })
                .collect();
            let mut maxima = 0;
            for i in 1..grid - 1 {
                if density[i] > density[i - 1] && density[i] > density[i + 1] {
                    maxima += 1;
                }
            }
            maxima
        };
        assert_eq!(count_maxima(0.5), 2, "expected a bimodal conditional density");
        assert_eq!(count_maxima(-0.5), 1, "expected a unimodal low-volatility density");
    }

    #[test]
    fn white_noise_conditional_quantile_is_the_marginal_quantile() {
        let margin = MarginSpec::laplace(0.4, 1.2).unwrap();
        let model = VtArmaModel::with_margin(
            VTransform::linear(0.5).unwrap(),
            ArmaSpec::white_noise(),
            margin.clone(),
        );
        let state = model.conditional_state(&[]).unwrap();
        for &psi in &[0.05, 0.5, 0.99] {
            assert_abs_diff_eq!(
                model.cond_quantile(&state, psi).unwrap(),
                margin.quantile(psi).unwrap(),
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn conditional_cdf_matches_linear_closed_form() {
        // For the linear v-transform the conditional cdf has a closed form
        // through the constant down probability.
        let delta = 0.42;
        let model = VtArmaModel::new(
            VTransform::linear(delta).unwrap(),
            ArmaSpec::new(vec![0.95], vec![-0.85]).unwrap(),
        );
        let sigma_eps = model.arma.innovation_variance().sqrt();
        for &mu in &[-0.7, 0.0, 0.5] {
            let state = ConditionalState { mu_t: mu, sigma_eps };
            for i in 1..20 {
                let u = i as f64 / 20.0;
                let z_u = norm_quantile(
                    model.vt.evaluate(u).clamp(crate::copula::V_CLAMP, 1.0 - crate::copula::V_CLAMP),
                );
                let tail = norm_cdf((z_u - mu) / sigma_eps);
                let closed = if u <= delta {
                    delta * (1.0 - tail)
                } else {
                    delta + (1.0 - delta) * tail
                };
                let quad = model.cond_cdf_pit(&state, u).unwrap();
                assert!(
                    (quad - closed).abs() < 1e-6,
                    "u={u} mu={mu}: quadrature {quad} vs closed form {closed}"
                );
            }
        }
    }

    #[test]
    fn conditional_quantiles_round_trip_and_are_monotone() {
        let model = fig3_model();
        let state = ConditionalState {
            mu_t: 0.35,
            sigma_eps: model.arma.innovation_variance().sqrt(),
        };
        let mut prev = 0.0;
        for &psi in &[0.01, 0.05, 0.5, 0.95, 0.99] {
            let u = model.cond_quantile_pit(&state, psi).unwrap();
            assert!(u > prev, "quantiles must be monotone in psi");
            prev = u;
            let back = model.cond_cdf_pit(&state, u).unwrap();
            assert_abs_diff_eq!(back, psi, epsilon = 1e-7);
        }
        assert!(model.cond_quantile_pit(&state, 0.0).is_err());
    }

    #[test]
    fn var_negates_the_lower_quantile() {
        let model = VtArmaModel::with_margin(
            VTransform::two_param(0.46, 0.92).unwrap(),
            ArmaSpec::new(vec![0.95], vec![-0.85]).unwrap(),
            MarginSpec::laplace(0.1, 2.9).unwrap(),
        );
        let state = model.conditional_state_from_returns(&[1.0, -2.0, 0.3]).unwrap();
        let q05 = model.cond_quantile(&state, 0.05).unwrap();
        assert_abs_diff_eq!(
            model.conditional_var(&state, 0.95).unwrap(),
            -q05,
            epsilon = 1e-12
        );
        let var99 = model.conditional_var(&state, 0.99).unwrap();
        assert!(var99 > model.conditional_var(&state, 0.95).unwrap());
    }

    #[test]
    fn residuals_reduce_to_scores_for_white_noise() {
        let model = VtArmaModel::new(
            VTransform::linear(0.44).unwrap(),
            ArmaSpec::white_noise(),
        );
        let u = [0.2, 0.6, 0.9, 0.31];
        let r = model.residuals_pit(&u).unwrap();
        let z = model.proxy_scores(&u).unwrap();
        assert_eq!(r, z);
        let err = model.residuals_pit(&[0.5, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("index 1"));
    }

    #[test]
    fn proxy_transform_is_symmetric_for_symmetric_models() {
        let model = VtArmaModel::with_margin(
            VTransform::linear(0.5).unwrap(),
            ArmaSpec::new(vec![0.9], vec![]).unwrap(),
            MarginSpec::laplace(0.0, 1.0).unwrap(),
        );
        for &a in &[0.2, 1.0, 3.5, 10.0] {
            assert_abs_diff_eq!(
                model.proxy_transform(-a).unwrap(),
                model.proxy_transform(a).unwrap(),
                epsilon = 1e-10
            );
        }
        // Clamped minimum at the change point, monotone on both sides.
        let at_center = model.proxy_transform(0.0).unwrap();
        assert_abs_diff_eq!(
            at_center,
            norm_quantile(crate::copula::V_CLAMP),
            epsilon = 1e-9
        );
        assert!(model.proxy_transform(1.0).unwrap() < model.proxy_transform(2.0).unwrap());
        assert!(model.proxy_transform(-1.0).unwrap() > at_center);
    }

    #[test]
    fn model_serde_round_trip() {
        let model = VtArmaModel::with_margin(
            VTransform::two_param(0.463, 0.92).unwrap(),
            ArmaSpec::new(vec![0.965], vec![-0.847]).unwrap(),
            MarginSpec::laplace(0.315, 3.194).unwrap(),
        );
        let json = serde_json::to_string(&model).unwrap();
        let back: VtArmaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.arma, model.arma);
        assert_eq!(back.margin, model.margin);
        let no_margin: VtArmaModel = serde_json::from_str(
            r#"{"vt":{"kind":"linear","delta":0.5},"arma":{"ar":[0.9],"ma":[]}}"#,
        )
        .unwrap();
        assert!(no_margin.margin.is_none());
        // Component validation still applies through the model document.
        assert!(serde_json::from_str::<VtArmaModel>(
            r#"{"vt":{"kind":"linear","delta":0.5},"arma":{"ar":[1.2],"ma":[]}}"#
        )
        .is_err());
    }
}
