//! V-transforms and VT-ARMA copula processes for volatile time series.
//!
//! The crate builds stationary models for financial return series by
//! linking the probability-integral transform of the returns to the PIT of
//! a volatility proxy through a v-transform, and driving the proxy with
//! the copula process of a unit-variance Gaussian ARMA model. It covers:
//!
//! - v-transforms: parametric families, generator form, stochastic
//!   inversion and volatility-proxy profiles ([`vtransform`]),
//! - marginal distribution families with optional skewing ([`margins`]),
//! - the constrained-variance ARMA driver with exact Kalman-filter
//!   likelihood ([`arma`]),
//! - copula-level analytics and serial-dependence measures ([`copula`]),
//! - the composite model: simulation, likelihoods, conditional densities
//!   and value-at-risk ([`model`]),
//! - maximum-likelihood fitting workflows with diagnostics
//!   ([`estimate`], [`diagnostics`]),
//! - one-step VaR forecasting and rolling backtests ([`forecast`]).
//!
//! Data-parallel inner loops (Monte Carlo studies, quadrature grids,
//! backtest windows) run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential execution without it.

pub mod arma;
pub mod copula;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod forecast;
pub mod margins;
pub mod model;
pub mod numeric;
pub mod par;
pub mod vtransform;

mod optim;

pub use arma::{ArmaSpec, KalmanOutput};
pub use error::{Error, Result};
pub use estimate::{CopulaFit, FitReport, JointFit, MarginFit, VtKind};
pub use forecast::{BacktestConfig, BacktestReport, ForecastRow};
pub use margins::{MarginFamily, MarginSpec};
pub use model::{ConditionalState, SimOutput, VtArmaModel};
pub use vtransform::{Generator, ProxyProfile, VTransform};
