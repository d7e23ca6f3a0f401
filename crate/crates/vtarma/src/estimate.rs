//! Fitting workflows: pseudo-observations, semi-parametric copula maximum
//! likelihood, iid marginal fits, joint estimation, standard errors, the
//! likelihood-ratio test for stochastic volatility and empirical
//! v-transforms.
//!
//! Constraints are handled by smooth reparameterization: the fulcrum
//! through a logistic map, positive parameters through logs, and ARMA
//! coefficients through partial autocorrelations mapped by the
//! Durbin-Levinson recursion, which keeps every candidate causal and
//! invertible during the search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::arma::{ar_to_pacf, pacf_to_ar, ArmaSpec};
use crate::diagnostics::{diagnose_residuals, TestResult};
use crate::error::{Error, Result};
use crate::margins::{MarginFamily, MarginSpec};
use crate::model::VtArmaModel;
use crate::optim;
use crate::par;
use crate::vtransform::VTransform;

/// Maximum objective evaluations per optimizer start.
const MAX_EVALS: usize = 2000;

/// Fittable v-transform kinds, indexed as in the model naming scheme
/// `vt{1|2|3}-arma(p,q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VtKind {
    Linear,
    TwoParam,
    ThreeParam,
}

impl VtKind {
    pub fn param_count(self) -> usize {
        match self {
            VtKind::Linear => 1,
            VtKind::TwoParam => 2,
            VtKind::ThreeParam => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VtKind::Linear => "vt1",
            VtKind::TwoParam => "vt2",
            VtKind::ThreeParam => "vt3",
        }
    }

    /// Builds a v-transform from natural parameters `[delta, kappa?, xi?]`.
    pub fn build(self, params: &[f64]) -> Result<VTransform> {
        match self {
            VtKind::Linear => VTransform::linear(params[0]),
            VtKind::TwoParam => VTransform::two_param(params[0], params[1]),
            VtKind::ThreeParam => VTransform::three_param(params[0], params[1], params[2]),
        }
    }

    fn natural(self, vt: &VTransform) -> Vec<f64> {
        match (self, vt) {
            (VtKind::Linear, VTransform::Linear { delta }) => vec![*delta],
            (VtKind::TwoParam, VTransform::TwoParam { delta, kappa }) => vec![*delta, *kappa],
            (VtKind::ThreeParam, VTransform::ThreeParam { delta, kappa, xi }) => {
                vec![*delta, *kappa, *xi]
            }
            _ => panic!("v-transform does not match the declared kind"),
        }
    }
}

/// Optimizer status attached to a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub evaluations: usize,
    pub message: String,
}

/// Estimates, uncertainty, fit quality and diagnostics for one fit.
///
/// `std_errors[i]` is `None` when the observed information is singular or
/// non-positive in that direction. `aic = 2 k - 2 loglik` with `k` the
/// number of free parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub residuals: Vec<f64>,
    pub diagnostics: BTreeMap<String, TestResult>,
    pub convergence: Convergence,
    pub arma_order: (usize, usize),
}

impl FitReport {
    /// Estimate looked up by parameter name.
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.estimates[i])
    }

    /// Standard error looked up by parameter name.
    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .and_then(|i| self.std_errors[i])
    }
}

/// A fitted copula process (PIT scale, no margin).
#[derive(Debug, Clone)]
pub struct CopulaFit {
    pub model: VtArmaModel,
    pub report: FitReport,
}

/// A fitted marginal distribution.
#[derive(Debug, Clone)]
pub struct MarginFit {
    pub margin: MarginSpec,
    pub report: FitReport,
}

/// A jointly fitted model with margin.
#[derive(Debug, Clone)]
pub struct JointFit {
    pub model: VtArmaModel,
    pub report: FitReport,
}

/// Likelihood-ratio test for the presence of stochastic volatility: under
/// the null of no ARMA dependence the copula log-likelihood is identically
/// zero, so the statistic is twice the maximized value, referred to a
/// chi-squared with one degree of freedom per ARMA parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Rank-based pseudo-observations `rank(x_t) / (n + 1)`, with ties broken
/// by average rank.
pub fn pseudo_obs(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Data("need at least two observations for ranks".into()));
    }
    if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite observation at index {bad}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values"));
    let mut u = vec![0.0; n];
    let scale = 1.0 / (n as f64 + 1.0);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // Average rank over the tie run; ranks are 1-based.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            u[idx] = rank * scale;
        }
        start = end;
    }
    Ok(u)
}

/// Empirical v-transform pairs `(u_t, v_t)`: scaled empirical PITs of the
/// data and of the volatility proxy series `proxy(x_t)`.
pub fn empirical_vtransform(x: &[f64], proxy: impl Fn(f64) -> f64) -> Result<Vec<(f64, f64)>> {
    let u = pseudo_obs(x)?;
    let proxied: Vec<f64> = x.iter().map(|&xt| proxy(xt)).collect();
    let v = pseudo_obs(&proxied)?;
    Ok(u.into_iter().zip(v).collect())
}

/// Standard errors from the inverse numerical Hessian of the negative
/// log-likelihood at the estimate.
pub fn std_errors(neg_loglik: impl Fn(&[f64]) -> f64, estimate: &[f64]) -> Vec<Option<f64>> {
    optim::hessian_std_errors(neg_loglik, estimate)
}

/// Likelihood-ratio test for stochastic volatility from a fitted copula
/// report.
pub fn lr_stochastic_volatility(report: &FitReport) -> LrTest {
    let statistic = (2.0 * report.loglik).max(0.0);
    let df = report.arma_order.0 + report.arma_order.1;
    let p_value = if df == 0 {
        1.0
    } else {
        let chi = ChiSquared::new(df as f64).expect("positive dof");
        1.0 - chi.cdf(statistic)
    };
    LrTest {
        statistic,
        df,
        p_value,
    }
}

// ---------------------------------------------------------------------------
// Parameter transformations
// ---------------------------------------------------------------------------

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t.clamp(-40.0, 40.0)).exp())
}

fn exp_clamped(t: f64) -> f64 {
    t.clamp(-30.0, 30.0).exp()
}

fn pacf_to_coeffs(theta: &[f64], flip: bool) -> Vec<f64> {
    let pacf: Vec<f64> = theta
        .iter()
        .map(|t| t.tanh().clamp(-1.0 + 1e-12, 1.0 - 1e-12))
        .collect();
    let coeffs = pacf_to_ar(&pacf);
    if flip {
        coeffs.iter().map(|c| -c).collect()
    } else {
        coeffs
    }
}

fn coeffs_to_theta(coeffs: &[f64], flip: bool) -> Vec<f64> {
    let base: Vec<f64> = if flip {
        coeffs.iter().map(|c| -c).collect()
    } else {
        coeffs.to_vec()
    };
    ar_to_pacf(&base)
        .iter()
        .map(|r| r.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh())
        .collect()
}

/// Unconstrained parameterization of a copula model (v-transform + ARMA).
#[derive(Clone, Copy)]
struct CopulaParam {
    kind: VtKind,
    order: (usize, usize),
}

impl CopulaParam {
    fn dim(&self) -> usize {
        self.kind.param_count() + self.order.0 + self.order.1
    }

    fn pack(&self, vt: &VTransform, arma: &ArmaSpec) -> Vec<f64> {
        let natural = self.kind.natural(vt);
        let mut theta = vec![logit(natural[0])];
        for &value in &natural[1..] {
            theta.push(value.ln());
        }
        theta.extend(coeffs_to_theta(arma.ar(), false));
        theta.extend(coeffs_to_theta(arma.ma(), true));
        theta
    }

    fn unpack(&self, theta: &[f64]) -> Result<(VTransform, ArmaSpec)> {
        let k = self.kind.param_count();
        let mut natural = vec![logistic(theta[0])];
        for &t in &theta[1..k] {
            natural.push(exp_clamped(t));
        }
        let (p, q) = self.order;
        let ar = pacf_to_coeffs(&theta[k..k + p], false);
        let ma = pacf_to_coeffs(&theta[k + p..k + p + q], true);
        Ok((self.kind.build(&natural)?, ArmaSpec::new(ar, ma)?))
    }

    fn natural_values(&self, vt: &VTransform, arma: &ArmaSpec) -> Vec<f64> {
        let mut values = self.kind.natural(vt);
        values.extend_from_slice(arma.ar());
        values.extend_from_slice(arma.ma());
        values
    }

    fn build_from_natural(&self, values: &[f64]) -> Result<(VTransform, ArmaSpec)> {
        let k = self.kind.param_count();
        let (p, q) = self.order;
        let vt = self.kind.build(&values[..k])?;
        let arma = ArmaSpec::new(values[k..k + p].to_vec(), values[k + p..k + p + q].to_vec())?;
        Ok((vt, arma))
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec!["delta".to_string()];
        if self.kind.param_count() >= 2 {
            names.push("kappa".to_string());
        }
        if self.kind.param_count() >= 3 {
            names.push("xi".to_string());
        }
        for i in 1..=self.order.0 {
            names.push(format!("alpha_{i}"));
        }
        for i in 1..=self.order.1 {
            names.push(format!("beta_{i}"));
        }
        names
    }

    fn label(&self) -> String {
        format!("{}-arma({},{})", self.kind.label(), self.order.0, self.order.1)
    }
}

/// Unconstrained parameterization of a marginal model.
#[derive(Clone, Copy)]
struct MarginParam {
    family: MarginFamily,
    skew: bool,
}

impl MarginParam {
    fn dim(&self) -> usize {
        2 + usize::from(self.family.has_shape()) + usize::from(self.skew)
    }

    fn pack(&self, margin: &MarginSpec) -> Vec<f64> {
        let mut theta = vec![margin.mu, margin.sigma.ln()];
        if self.family.has_shape() {
            theta.push(margin.eta.expect("shape present").ln());
        }
        if self.skew {
            theta.push(margin.gamma_or_one().ln());
        }
        theta
    }

    fn unpack(&self, theta: &[f64]) -> Result<MarginSpec> {
        let mu = theta[0];
        let sigma = exp_clamped(theta[1]);
        let mut cursor = 2;
        let spec = match self.family {
            MarginFamily::Laplace => MarginSpec::laplace(mu, sigma)?,
            MarginFamily::Student => {
                cursor += 1;
                MarginSpec::student(mu, sigma, exp_clamped(theta[2]))?
            }
            MarginFamily::DoubleWeibull => {
                cursor += 1;
                MarginSpec::double_weibull(mu, sigma, exp_clamped(theta[2]))?
            }
        };
        if self.skew {
            spec.with_skew(exp_clamped(theta[cursor]))
        } else {
            Ok(spec)
        }
    }

    fn natural_values(&self, margin: &MarginSpec) -> Vec<f64> {
        let mut values = vec![margin.mu, margin.sigma];
        if self.family.has_shape() {
            values.push(margin.eta.expect("shape present"));
        }
        if self.skew {
            values.push(margin.gamma_or_one());
        }
        values
    }

    fn build_from_natural(&self, values: &[f64]) -> Result<MarginSpec> {
        let mut cursor = 2;
        let spec = match self.family {
            MarginFamily::Laplace => MarginSpec::laplace(values[0], values[1])?,
            MarginFamily::Student => {
                cursor += 1;
                MarginSpec::student(values[0], values[1], values[2])?
            }
            MarginFamily::DoubleWeibull => {
                cursor += 1;
                MarginSpec::double_weibull(values[0], values[1], values[2])?
            }
        };
        if self.skew {
            spec.with_skew(values[cursor])
        } else {
            Ok(spec)
        }
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec!["mu".to_string(), "sigma".to_string()];
        if self.family.has_shape() {
            names.push("eta".to_string());
        }
        if self.skew {
            names.push("gamma".to_string());
        }
        names
    }

    fn family_label(&self) -> &'static str {
        match self.family {
            MarginFamily::Laplace => "laplace",
            MarginFamily::Student => "student",
            MarginFamily::DoubleWeibull => "dweibull",
        }
    }
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

fn check_pit_data(u: &[f64]) -> Result<()> {
    if u.len() < 25 {
        return Err(Error::Data(format!(
            "need at least 25 observations to fit, got {}",
            u.len()
        )));
    }
    if let Some(bad) = u.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Data(format!(
            "PIT observation outside (0,1) at index {bad}"
        )));
    }
    Ok(())
}

/// Fits a VT-ARMA copula process to PIT-scale data by exact maximum
/// likelihood.
///
/// When `init` is given the optimizer starts there (used for warm starts
/// in rolling refits); otherwise a small set of deterministic starts is
/// searched in parallel and the best optimum is kept.
pub fn fit_copula(
    u: &[f64],
    kind: VtKind,
    order: (usize, usize),
    init: Option<&VtArmaModel>,
) -> Result<CopulaFit> {
    check_pit_data(u)?;
    let param = CopulaParam { kind, order };

    let objective = |theta: &[f64]| match param.unpack(theta) {
        Ok((vt, arma)) => {
            let model = VtArmaModel::new(vt, arma);
            match model.copula_loglik(u) {
                Ok(ll) if ll.is_finite() => -ll,
                _ => f64::INFINITY,
            }
        }
        Err(_) => f64::INFINITY,
    };

    let starts: Vec<Vec<f64>> = match init {
        Some(model) => vec![param.pack(&model.vt, &model.arma)],
        None => default_copula_starts(param),
    };
    let runs = par::map_collect(&starts, |start| optim::minimize(objective, start, MAX_EVALS));
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.partial_cmp(&b.value).expect("finite optima"))
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Numeric(
            "copula likelihood is not finite at any optimizer start".into(),
        ));
    }

    let (vt, arma) = param.unpack(&best.x)?;
    let model = VtArmaModel::new(vt, arma);
    let loglik = -best.value;
    let natural = param.natural_values(&model.vt, &model.arma);
    let natural_obj = |values: &[f64]| match param.build_from_natural(values) {
        Ok((vt, arma)) => match VtArmaModel::new(vt, arma).copula_loglik(u) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    };
    let ses = optim::hessian_std_errors(natural_obj, &natural);
    let residuals = model.residuals_pit(u)?;
    let diagnostics = diagnose_residuals(&residuals)?.tests;
    let k = param.dim();

    let report = FitReport {
        model: param.label(),
        names: param.names(),
        estimates: natural,
        std_errors: ses,
        loglik,
        aic: 2.0 * k as f64 - 2.0 * loglik,
        residuals,
        diagnostics,
        convergence: Convergence {
            converged: best.converged,
            evaluations: best.evaluations,
            message: if best.converged {
                "simplex converged".to_string()
            } else {
                "evaluation budget exhausted".to_string()
            },
        },
        arma_order: order,
    };
    Ok(CopulaFit { model, report })
}

fn default_copula_starts(param: CopulaParam) -> Vec<Vec<f64>> {
    let (p, q) = param.order;
    // (first AR pacf, first MA pacf) seeds: persistent-volatility,
    // moderate, and near-independent shapes.
    let shapes: [(f64, f64); 3] = [(0.9, 0.8), (0.5, 0.3), (0.1, 0.1)];
    shapes
        .iter()
        .map(|&(ar0, ma0)| {
            let mut theta = vec![0.0; param.kind.param_count()];
            let mut ar = vec![0.0; p];
            if p > 0 {
                ar[0] = ar0.atanh();
            }
            let mut ma = vec![0.0; q];
            if q > 0 {
                ma[0] = ma0.atanh();
            }
            theta.extend(ar);
            theta.extend(ma);
            theta
        })
        .collect()
}

/// Fits a marginal distribution to iid return data by maximum likelihood.
pub fn fit_margin_iid(x: &[f64], family: MarginFamily, skew: bool) -> Result<MarginFit> {
    if x.len() < 25 {
        return Err(Error::Data(format!(
            "need at least 25 observations to fit, got {}",
            x.len()
        )));
    }
    if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite observation at index {bad}")));
    }
    let param = MarginParam { family, skew };

    let objective = |theta: &[f64]| match param.unpack(theta) {
        Ok(margin) => {
            let ll: f64 = x.iter().map(|&xt| margin.ln_pdf(xt)).sum();
            if ll.is_finite() {
                -ll
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    };

    // Location/scale starts: robust (median, mean absolute deviation) and
    // moment-based.
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let median = sorted[sorted.len() / 2];
    let mad = x.iter().map(|v| (v - median).abs()).sum::<f64>() / x.len() as f64;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let std = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64).sqrt();
    let eta0: f64 = match family {
        MarginFamily::Student => 5.0,
        _ => 1.0,
    };
    let starts: Vec<Vec<f64>> = [(median, mad.max(1e-6)), (mean, std.max(1e-6))]
        .iter()
        .map(|&(loc, scale)| {
            let mut theta = vec![loc, scale.ln()];
            if family.has_shape() {
                theta.push(eta0.ln());
            }
            if skew {
                theta.push(0.0);
            }
            theta
        })
        .collect();

    let runs = par::map_collect(&starts, |start| optim::minimize(objective, start, MAX_EVALS));
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.partial_cmp(&b.value).expect("finite optima"))
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Numeric("marginal likelihood is not finite".into()));
    }

    let margin = param.unpack(&best.x)?;
    let loglik = -best.value;
    let natural = param.natural_values(&margin);
    let natural_obj = |values: &[f64]| match param.build_from_natural(values) {
        Ok(m) => {
            let ll: f64 = x.iter().map(|&xt| m.ln_pdf(xt)).sum();
            if ll.is_finite() {
                -ll
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    };
    let ses = optim::hessian_std_errors(natural_obj, &natural);
    let k = param.dim();

    let report = FitReport {
        model: format!("margin-{}", param.family_label()),
        names: param.names(),
        estimates: natural,
        std_errors: ses,
        loglik,
        aic: 2.0 * k as f64 - 2.0 * loglik,
        residuals: Vec::new(),
        diagnostics: BTreeMap::new(),
        convergence: Convergence {
            converged: best.converged,
            evaluations: best.evaluations,
            message: if best.converged {
                "simplex converged".to_string()
            } else {
                "evaluation budget exhausted".to_string()
            },
        },
        arma_order: (0, 0),
    };
    Ok(MarginFit { margin, report })
}

/// Jointly fits margin, v-transform and ARMA parameters to return data.
///
/// Follows the stepwise workflow when no warm start is supplied: a
/// semi-parametric copula fit on pseudo-observations and an iid margin
/// fit provide the starting values for the joint optimization. With
/// `constrain_fulcrum` the fulcrum is tied to the margin by
/// `delta = F_X(0)` instead of being a free parameter (default
/// unconstrained, which typically fits better).
pub fn fit_joint(
    x: &[f64],
    kind: VtKind,
    order: (usize, usize),
    family: MarginFamily,
    skew: bool,
    constrain_fulcrum: bool,
    warm: Option<&VtArmaModel>,
) -> Result<JointFit> {
    let copula_param = CopulaParam { kind, order };
    let margin_param = MarginParam { family, skew };

    let (warm_vt, warm_arma, warm_margin) = match warm {
        Some(model) => {
            let margin = model
                .margin
                .clone()
                .ok_or_else(|| Error::InvalidSpec("warm start must carry a margin".into()))?;
            (model.vt.clone(), model.arma.clone(), margin)
        }
        None => {
            let u = pseudo_obs(x)?;
            let copula = fit_copula(&u, kind, order, None)?;
            let margin = fit_margin_iid(x, family, skew)?;
            (copula.model.vt, copula.model.arma, margin.margin)
        }
    };

    // Unconstrained layout: margin params, then vt params (fulcrum first
    // unless constrained away), then ARMA partial autocorrelations.
    let assemble = |theta: &[f64]| -> Result<VtArmaModel> {
        let m_dim = margin_param.dim();
        let margin = margin_param.unpack(&theta[..m_dim])?;
        let mut vt_natural = Vec::with_capacity(kind.param_count());
        let mut cursor = m_dim;
        if constrain_fulcrum {
            vt_natural.push(margin.cdf(0.0));
        } else {
            vt_natural.push(logistic(theta[cursor]));
            cursor += 1;
        }
        for _ in 1..kind.param_count() {
            vt_natural.push(exp_clamped(theta[cursor]));
            cursor += 1;
        }
        let (p, q) = order;
        let ar = pacf_to_coeffs(&theta[cursor..cursor + p], false);
        let ma = pacf_to_coeffs(&theta[cursor + p..cursor + p + q], true);
        Ok(VtArmaModel::with_margin(
            kind.build(&vt_natural)?,
            ArmaSpec::new(ar, ma)?,
            margin,
        ))
    };

    let objective = |theta: &[f64]| match assemble(theta) {
        Ok(model) => match model.full_loglik(x) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    };

    let mut start = margin_param.pack(&warm_margin);
    let vt_natural = kind.natural(&warm_vt);
    if !constrain_fulcrum {
        start.push(logit(vt_natural[0]));
    }
    for &value in &vt_natural[1..] {
        start.push(value.ln());
    }
    start.extend(coeffs_to_theta(warm_arma.ar(), false));
    start.extend(coeffs_to_theta(warm_arma.ma(), true));

    let best = optim::minimize(objective, &start, 2 * MAX_EVALS);
    if !best.value.is_finite() {
        return Err(Error::Numeric("joint likelihood is not finite".into()));
    }
    let model = assemble(&best.x)?;
    let loglik = -best.value;

    // Natural-scale report: margin, v-transform (fulcrum always shown),
    // then ARMA coefficients. The fulcrum row has no standard error when
    // it is a derived quantity under the constraint.
    let margin = model.margin.as_ref().expect("joint model has a margin");
    let mut names = margin_param.names();
    names.extend(copula_param.names());
    let mut estimates = margin_param.natural_values(margin);
    estimates.extend(copula_param.natural_values(&model.vt, &model.arma));

    let m_dim = margin_param.dim();
    let free_natural: Vec<f64> = if constrain_fulcrum {
        let mut v = estimates[..m_dim].to_vec();
        v.extend_from_slice(&estimates[m_dim + 1..]);
        v
    } else {
        estimates.clone()
    };
    let natural_obj = |values: &[f64]| {
        let rebuilt = (|| -> Result<VtArmaModel> {
            let margin = margin_param.build_from_natural(&values[..m_dim])?;
            let mut vt_vals = Vec::with_capacity(kind.param_count());
            let mut cursor = m_dim;
            if constrain_fulcrum {
                vt_vals.push(margin.cdf(0.0));
            } else {
                vt_vals.push(values[cursor]);
                cursor += 1;
            }
            for _ in 1..kind.param_count() {
                vt_vals.push(values[cursor]);
                cursor += 1;
            }
            let (p, q) = order;
            let ar = values[cursor..cursor + p].to_vec();
            let ma = values[cursor + p..cursor + p + q].to_vec();
            Ok(VtArmaModel::with_margin(
                kind.build(&vt_vals)?,
                ArmaSpec::new(ar, ma)?,
                margin,
            ))
        })();
        match rebuilt {
            Ok(model) => match model.full_loglik(x) {
                Ok(ll) if ll.is_finite() => -ll,
                _ => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };
    let free_ses = optim::hessian_std_errors(natural_obj, &free_natural);
    let std_errors: Vec<Option<f64>> = if constrain_fulcrum {
        let mut ses = free_ses[..m_dim].to_vec();
        ses.push(None);
        ses.extend_from_slice(&free_ses[m_dim..]);
        ses
    } else {
        free_ses
    };

    let residuals = model.residuals(x)?;
    let diagnostics = diagnose_residuals(&residuals)?.tests;
    let free_count = free_natural.len();

    let report = FitReport {
        model: format!("{}-{}", copula_param.label(), margin_param.family_label()),
        names,
        estimates,
        std_errors,
        loglik,
        aic: 2.0 * free_count as f64 - 2.0 * loglik,
        residuals,
        diagnostics,
        convergence: Convergence {
            converged: best.converged,
            evaluations: best.evaluations,
            message: if best.converged {
                "simplex converged".to_string()
            } else {
                "evaluation budget exhausted".to_string()
            },
        },
        arma_order: order,
    };
    Ok(JointFit { model, report })
}
