//! Marginal distribution families for return data: Laplace, Student t and
//! double-Weibull location-scale families, optionally skewed.
//!
//! Skewing follows the two-piece construction
//! `f(z; gamma) = 2 gamma / (1 + gamma^2) * f0(gamma z)` for `z <= 0` and
//! `f0(z / gamma)` for `z > 0`, applied to the standardized symmetric core
//! before the location-scale shift. `gamma = 1` recovers the symmetric
//! family; the skewed cdf at zero equals `1 / (1 + gamma^2)`.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::bisect;

/// A symmetric density on the real line, standardized (location 0, unit
/// scale in the family's own parameterization).
pub trait SymmetricDist {
    fn pdf(&self, z: f64) -> f64;
    fn ln_pdf(&self, z: f64) -> f64;
    fn cdf(&self, z: f64) -> f64;
    fn quantile(&self, p: f64) -> f64;
}

/// Standard Laplace (double exponential) core, `f(z) = exp(-|z|) / 2`.
#[derive(Debug, Clone, Copy)]
pub struct LaplaceCore;

impl SymmetricDist for LaplaceCore {
    fn pdf(&self, z: f64) -> f64 {
        0.5 * (-z.abs()).exp()
    }

    fn ln_pdf(&self, z: f64) -> f64 {
        -z.abs() + 0.5f64.ln()
    }

    fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.5 {
            (2.0 * p).ln()
        } else {
            -(2.0 * (1.0 - p)).ln()
        }
    }
}

/// Student t core with `eta` degrees of freedom (any `eta > 0`, so
/// infinite-variance fits such as `eta < 2` are allowed).
#[derive(Debug, Clone, Copy)]
pub struct StudentCore {
    pub eta: f64,
}

impl SymmetricDist for StudentCore {
    fn pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z).exp()
    }

    fn ln_pdf(&self, z: f64) -> f64 {
        let nu = self.eta;
        ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (nu * std::f64::consts::PI).ln()
            - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
    }

    fn cdf(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.5;
        }
        let x = self.eta / (self.eta + z * z);
        let tail = 0.5 * beta_reg(0.5 * self.eta, 0.5, x);
        if z < 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        if p == 0.5 {
            return 0.0;
        }
        if p > 0.5 {
            return -self.quantile(1.0 - p);
        }
        // Expand a bracket into the lower tail, then bisect on the cdf.
        let mut lo = -1.0;
        while self.cdf(lo) > p && lo > -1e300 {
            lo *= 4.0;
        }
        bisect(|z| self.cdf(z) - p, lo, 0.0)
    }
}

/// Double-Weibull core: back-to-back Weibull halves,
/// `f(z) = eta/2 * |z|^(eta-1) * exp(-|z|^eta)`, reducing to Laplace at
/// `eta = 1`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWeibullCore {
    pub eta: f64,
}

impl SymmetricDist for DoubleWeibullCore {
    fn pdf(&self, z: f64) -> f64 {
        if z == 0.0 {
            return match self.eta.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Less) => f64::INFINITY,
                Some(std::cmp::Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
        let t = z.abs();
        0.5 * self.eta * t.powf(self.eta - 1.0) * (-t.powf(self.eta)).exp()
    }

    fn ln_pdf(&self, z: f64) -> f64 {
        let t = z.abs().max(1e-300);
        (0.5 * self.eta).ln() + (self.eta - 1.0) * t.ln() - t.powf(self.eta)
    }

    fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            0.5 * (-(-z).powf(self.eta)).exp()
        } else {
            1.0 - 0.5 * (-z.powf(self.eta)).exp()
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.5 {
            -(-(2.0 * p).ln()).powf(1.0 / self.eta)
        } else {
            (-(2.0 * (1.0 - p)).ln()).powf(1.0 / self.eta)
        }
    }
}

/// Two-piece skewed version of a symmetric core.
#[derive(Debug, Clone, Copy)]
pub struct Skewed<D> {
    core: D,
    gamma: f64,
}

impl<D: SymmetricDist> Skewed<D> {
    /// Skews a symmetric core; `gamma > 1` skews right, `gamma < 1` left.
    pub fn new(core: D, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!(
                "skewness gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { core, gamma })
    }

    /// Mass to the left of zero, `1 / (1 + gamma^2)`.
    pub fn mass_below_zero(&self) -> f64 {
        1.0 / (1.0 + self.gamma * self.gamma)
    }
}

impl<D: SymmetricDist> SymmetricDist for Skewed<D> {
    fn pdf(&self, z: f64) -> f64 {
        let g = self.gamma;
        let c = 2.0 * g / (1.0 + g * g);
        if z <= 0.0 {
            c * self.core.pdf(g * z)
        } else {
            c * self.core.pdf(z / g)
        }
    }

    fn ln_pdf(&self, z: f64) -> f64 {
        let g = self.gamma;
        let c = (2.0 * g / (1.0 + g * g)).ln();
        if z <= 0.0 {
            c + self.core.ln_pdf(g * z)
        } else {
            c + self.core.ln_pdf(z / g)
        }
    }

    fn cdf(&self, z: f64) -> f64 {
        let g = self.gamma;
        let delta0 = self.mass_below_zero();
        if z <= 0.0 {
            2.0 * delta0 * self.core.cdf(g * z)
        } else {
            delta0 + 2.0 * delta0 * g * g * (self.core.cdf(z / g) - 0.5)
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let g = self.gamma;
        let delta0 = self.mass_below_zero();
        if p <= delta0 {
            self.core.quantile(0.5 * p / delta0) / g
        } else {
            g * self.core.quantile(0.5 + (p - delta0) / (2.0 * delta0 * g * g))
        }
    }
}

/// Marginal family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginFamily {
    Laplace,
    Student,
    DoubleWeibull,
}

impl MarginFamily {
    /// Whether the family carries a shape parameter `eta`.
    pub fn has_shape(&self) -> bool {
        !matches!(self, MarginFamily::Laplace)
    }
}

/// A marginal distribution: family, location `mu`, scale `sigma`, optional
/// shape `eta` (degrees of freedom for Student, Weibull exponent for
/// double-Weibull) and optional skewness `gamma` (1 = symmetric).
///
/// Serializes to JSON as `{"family", "mu", "sigma", "eta"?, "gamma"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarginRepr")]
pub struct MarginSpec {
    pub family: MarginFamily,
    pub mu: f64,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Deserialize)]
struct MarginRepr {
    family: MarginFamily,
    mu: f64,
    sigma: f64,
    eta: Option<f64>,
    gamma: Option<f64>,
}

impl TryFrom<MarginRepr> for MarginSpec {
    type Error = Error;

    fn try_from(r: MarginRepr) -> Result<Self> {
        let spec = MarginSpec {
            family: r.family,
            mu: r.mu,
            sigma: r.sigma,
            eta: r.eta,
            gamma: r.gamma,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl MarginSpec {
    pub fn laplace(mu: f64, sigma: f64) -> Result<Self> {
        let spec = Self {
            family: MarginFamily::Laplace,
            mu,
            sigma,
            eta: None,
            gamma: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn student(mu: f64, sigma: f64, eta: f64) -> Result<Self> {
        let spec = Self {
            family: MarginFamily::Student,
            mu,
            sigma,
            eta: Some(eta),
            gamma: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn double_weibull(mu: f64, sigma: f64, eta: f64) -> Result<Self> {
        let spec = Self {
            family: MarginFamily::DoubleWeibull,
            mu,
            sigma,
            eta: Some(eta),
            gamma: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Adds a skewness parameter to the family.
    pub fn with_skew(mut self, gamma: f64) -> Result<Self> {
        self.gamma = Some(gamma);
        self.validate()?;
        Ok(self)
    }

    /// Skewness parameter, defaulting to the symmetric value 1.
    pub fn gamma_or_one(&self) -> f64 {
        self.gamma.unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidSpec("mu must be finite".into()));
        }
        match (self.family.has_shape(), self.eta) {
            (true, Some(eta)) if eta > 0.0 && eta.is_finite() => {}
            (true, _) => {
                return Err(Error::InvalidSpec(format!(
                    "{:?} margin requires a positive shape eta, got {:?}",
                    self.family, self.eta
                )))
            }
            (false, None) => {}
            (false, Some(_)) => {
                return Err(Error::InvalidSpec(
                    "laplace margin does not take a shape parameter".into(),
                ))
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "gamma must be positive, got {g}"
                )));
            }
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        self.dispatch(|d| d.pdf(z)) / self.sigma
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        self.dispatch(|d| d.ln_pdf(z)) - self.sigma.ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        self.dispatch(|d| d.cdf(z))
    }

    /// Quantile for `p` in the open unit interval.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level must be in (0,1), got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    /// Quantile extended to the closed interval: `p <= 0` gives `-inf` and
    /// `p >= 1` gives `+inf`.
    pub fn quantile_unchecked(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        self.mu + self.sigma * self.dispatch(|d| d.quantile(p))
    }

    fn dispatch<R>(&self, f: impl Fn(&dyn SymmetricDist) -> R) -> R {
        let gamma = self.gamma_or_one();
        match self.family {
            MarginFamily::Laplace => {
                let skewed = Skewed::new(LaplaceCore, gamma).expect("validated gamma");
                f(&skewed)
            }
            MarginFamily::Student => {
                let core = StudentCore {
                    eta: self.eta.expect("validated eta"),
                };
                let skewed = Skewed::new(core, gamma).expect("validated gamma");
                f(&skewed)
            }
            MarginFamily::DoubleWeibull => {
                let core = DoubleWeibullCore {
                    eta: self.eta.expect("validated eta"),
                };
                let skewed = Skewed::new(core, gamma).expect("validated gamma");
                f(&skewed)
            }
        }
    }
}
