//! V-transforms: uniformity-preserving maps linking the probability-integral
//! transform of a return to the PIT of its volatility proxy.
//!
//! A v-transform `V: [0,1] -> [0,1]` is V-shaped with `V(0) = V(1) = 1` and a
//! unique fulcrum `delta` where `V(delta) = 0`. The left branch is strictly
//! decreasing, the right branch strictly increasing, and dual points on
//! opposite sides of the fulcrum satisfy the square property
//! `|u* - u| = V(u)`.
//!
//! Three closed-form kinds are provided (linear, two-parameter and
//! three-parameter families) together with a generator form driven by any
//! continuous strictly increasing distribution function on `[0,1]`.

use std::fmt;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::margins::MarginSpec;
use crate::numeric::bisect;

/// Outputs within this distance of 0 or 1 are clamped onto the boundary.
const BOUNDARY_EPS: f64 = 1e-14;

/// Number of probe points used to vet a generator for strict monotonicity.
const GENERATOR_PROBE_POINTS: usize = 1024;

/// Default number of grid points used when vetting a proxy profile.
const PROFILE_PROBE_POINTS: usize = 512;

/// A continuous, strictly increasing distribution function on `[0,1]`
/// driving a generator-form v-transform.
#[derive(Clone)]
pub struct Generator {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    inverse: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Generator {
    /// Wraps a distribution function; the inverse is computed by bisection.
    pub fn new(psi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let eval: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(psi);
        let for_inverse = eval.clone();
        let inverse = Arc::new(move |p: f64| bisect(|x| for_inverse(x) - p, 0.0, 1.0));
        Self { eval, inverse }
    }

    /// Wraps a distribution function together with its exact inverse.
    pub fn with_inverse(
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(psi),
            inverse: Arc::new(inv),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn inverse(&self, p: f64) -> f64 {
        (self.inverse)(p)
    }
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Generator")
    }
}

/// A volatility proxy profile: the change point on the return scale and the
/// profile function `g` on `[0, inf)` with `g(0) = 0`, strictly increasing.
#[derive(Clone)]
pub struct ProxyProfile {
    mu_t: f64,
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ProxyProfile {
    pub fn new(mu_t: f64, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            mu_t,
            g: Arc::new(g),
        }
    }

    /// Change point on the return scale.
    pub fn mu_t(&self) -> f64 {
        self.mu_t
    }

    /// Profile function value `g(x)` for `x >= 0`.
    pub fn eval(&self, x: f64) -> f64 {
        (self.g)(x)
    }
}

impl fmt::Debug for ProxyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProxyProfile {{ mu_t: {} }}", self.mu_t)
    }
}

/// A v-transform.
///
/// Construct through [`VTransform::linear`], [`VTransform::two_param`],
/// [`VTransform::three_param`], [`VTransform::from_generator`] or
/// [`VTransform::from_proxy`]; the constructors validate the parameter
/// domain (`0 < delta < 1`, `kappa > 0`, `xi > 0`).
#[derive(Debug, Clone)]
pub enum VTransform {
    /// `kappa = 1`, `xi = 1`: piecewise-linear branches.
    Linear { delta: f64 },
    /// `xi = 1`.
    TwoParam { delta: f64, kappa: f64 },
    /// Full three-parameter family.
    ThreeParam { delta: f64, kappa: f64, xi: f64 },
    /// Driven by an arbitrary generator distribution function.
    Generator { delta: f64, psi: Generator },
}

impl VTransform {
    pub fn linear(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self::Linear { delta })
    }

    pub fn two_param(delta: f64, kappa: f64) -> Result<Self> {
        check_delta(delta)?;
        check_positive(kappa, "kappa")?;
        Ok(Self::TwoParam { delta, kappa })
    }

    pub fn three_param(delta: f64, kappa: f64, xi: f64) -> Result<Self> {
        check_delta(delta)?;
        check_positive(kappa, "kappa")?;
        check_positive(xi, "xi")?;
        Ok(Self::ThreeParam { delta, kappa, xi })
    }

    /// Builds a generator-form v-transform after vetting `psi` on a probe
    /// grid: `psi(0) = 0`, `psi(1) = 1` and strict monotonicity.
    pub fn from_generator(psi: Generator, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if psi.eval(0.0).abs() > 1e-9 || (psi.eval(1.0) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGenerator(
                "generator must satisfy psi(0) = 0 and psi(1) = 1".into(),
            ));
        }
        let mut prev = psi.eval(0.0);
        for i in 1..GENERATOR_PROBE_POINTS {
            let x = i as f64 / (GENERATOR_PROBE_POINTS - 1) as f64;
            let value = psi.eval(x);
            if !(value > prev) || !value.is_finite() {
                return Err(Error::InvalidGenerator(format!(
                    "generator is not strictly increasing near x = {x:.6}"
                )));
            }
            prev = value;
        }
        Ok(Self::Generator { delta, psi })
    }

    /// The fulcrum.
    pub fn delta(&self) -> f64 {
        match *self {
            Self::Linear { delta }
            | Self::TwoParam { delta, .. }
            | Self::ThreeParam { delta, .. }
            | Self::Generator { delta, .. } => delta,
        }
    }

    /// Evaluates `V(u)` for `u` in `[0,1]`.
    pub fn evaluate(&self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u), "u out of [0,1]: {u}");
        let v = match *self {
            Self::Linear { delta } => {
                if u <= delta {
                    (delta - u) / delta
                } else {
                    (u - delta) / (1.0 - delta)
                }
            }
            Self::TwoParam { delta, kappa } => eval_param(delta, kappa, 1.0, u),
            Self::ThreeParam { delta, kappa, xi } => eval_param(delta, kappa, xi, u),
            Self::Generator { delta, ref psi } => {
                if u <= delta {
                    (1.0 - u) - (1.0 - delta) * psi.eval(u / delta)
                } else {
                    u - delta * psi.inverse((1.0 - u) / (1.0 - delta))
                }
            }
        };
        clamp_unit(v)
    }

    /// Inverse of the left (decreasing) branch: the unique `u` in
    /// `[0, delta]` with `V(u) = v`.
    ///
    /// Bisection on the bracketed monotone branch; the linear kind inverts
    /// in closed form.
    pub fn inverse_left(&self, v: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&v), "v out of [0,1]: {v}");
        let delta = self.delta();
        if v <= 0.0 {
            return delta;
        }
        if v >= 1.0 {
            return 0.0;
        }
        if let Self::Linear { delta } = *self {
            return delta * (1.0 - v);
        }
        bisect(|u| v - self.evaluate(u), 0.0, delta)
    }

    /// Gradient `V'(u)`; at the fulcrum the left derivative is returned.
    ///
    /// Closed-form kinds differentiate analytically; the generator kind uses
    /// a branch-consistent central difference.
    pub fn gradient(&self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u), "u out of [0,1]: {u}");
        match *self {
            Self::Linear { delta } => {
                if u <= delta {
                    -1.0 / delta
                } else {
                    1.0 / (1.0 - delta)
                }
            }
            Self::TwoParam { delta, kappa } => grad_param(delta, kappa, 1.0, u),
            Self::ThreeParam { delta, kappa, xi } => grad_param(delta, kappa, xi, u),
            Self::Generator { delta, .. } => {
                let h = 1e-6;
                let (a, b) = if u <= delta {
                    ((u - h).max(0.0), (u + h).min(delta))
                } else {
                    ((u - h).max(delta), (u + h).min(1.0))
                };
                (self.evaluate(b) - self.evaluate(a)) / (b - a)
            }
        }
    }

    /// Conditional down probability `Delta(v) = -1 / V'(V^{-1}(v))`: the
    /// probability that `U` lies on the left branch given `V = v`.
    pub fn down_probability(&self, v: f64) -> f64 {
        if let Self::Linear { delta } = *self {
            // The linear family has constant down probability delta.
            return delta;
        }
        self.down_probability_at(self.inverse_left(v))
    }

    /// Down probability given the already-inverted left-branch point.
    fn down_probability_at(&self, left: f64) -> f64 {
        if let Self::Linear { delta } = *self {
            return delta;
        }
        let p = -1.0 / self.gradient(left);
        if p.is_nan() {
            0.5
        } else {
            p.clamp(0.0, 1.0)
        }
    }

    /// Stochastic inversion: maps `(v, w)` to a `u` with `V(u) = v`, taking
    /// the left branch when `w <= Delta(v)`. For iid uniform `(V, W)` the
    /// output is uniform.
    pub fn stochastic_invert(&self, v: f64, w: f64) -> f64 {
        let left = self.inverse_left(v);
        if w <= self.down_probability_at(left) {
            left
        } else {
            clamp_unit(v + left)
        }
    }

    /// The dual point `u*` on the opposite side of the fulcrum with
    /// `V(u*) = V(u)` and `|u* - u| = V(u)`.
    pub fn dual_point(&self, u: f64) -> Result<f64> {
        let delta = self.delta();
        if u == delta {
            return Err(Error::NoDual);
        }
        let v = self.evaluate(u);
        Ok(clamp_unit(if u < delta { u + v } else { u - v }))
    }

    /// The volatility proxy profile implied by this v-transform and a
    /// marginal distribution: change point `mu_T = F_X^{-1}(delta)` and
    /// `g(x) = F_X^{-1}(F_X(mu_T - x) + V(F_X(mu_T - x))) - mu_T`.
    pub fn implied_profile(&self, margin: &MarginSpec) -> Result<ProxyProfile> {
        margin.validate()?;
        let mu_t = margin.quantile(self.delta())?;
        let vt = self.clone();
        let margin = margin.clone();
        let g = move |x: f64| {
            let u = margin.cdf(mu_t - x);
            let up = clamp_unit(u + vt.evaluate(clamp_unit(u)));
            margin.quantile_unchecked(up) - mu_t
        };
        Ok(ProxyProfile::new(mu_t, g))
    }

    /// Reconstructs the v-transform determined by a marginal distribution
    /// and a volatility proxy profile.
    ///
    /// The left branch fixes the generator,
    /// `Psi(s) = (1 - F_X(mu_T + g(mu_T - F_X^{-1}(s delta)))) / (1 - delta)`,
    /// and the right branch follows from the generator form. The profile is
    /// vetted for `g(0) = 0` and strict monotonicity on a probe grid.
    pub fn from_proxy(margin: &MarginSpec, profile: &ProxyProfile) -> Result<Self> {
        margin.validate()?;
        let mu_t = profile.mu_t();
        let delta = margin.cdf(mu_t);
        check_delta(delta).map_err(|_| {
            Error::InvalidProfile(format!(
                "change point {mu_t} maps to a degenerate fulcrum {delta}"
            ))
        })?;

        let span = (mu_t - margin.quantile_unchecked(delta * 1e-4)).abs();
        if profile.eval(0.0).abs() > 1e-8 * span.max(1.0) {
            return Err(Error::InvalidProfile("profile must satisfy g(0) = 0".into()));
        }
        let mut prev = profile.eval(0.0);
        for i in 1..=PROFILE_PROBE_POINTS {
            let x = span * i as f64 / PROFILE_PROBE_POINTS as f64;
            let value = profile.eval(x);
            if !(value > prev) || !value.is_finite() {
                return Err(Error::InvalidProfile(format!(
                    "profile is not strictly increasing near x = {x:.6}"
                )));
            }
            prev = value;
        }

        let margin = margin.clone();
        let profile = profile.clone();
        let psi = move |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            if s >= 1.0 {
                return 1.0;
            }
            let x = mu_t - margin.quantile_unchecked(s * delta);
            clamp_unit((1.0 - margin.cdf(mu_t + profile.eval(x))) / (1.0 - delta))
        };
        Ok(Self::Generator {
            delta,
            psi: Generator::new(psi),
        })
    }
}

/// Closed-form evaluation of the parametric family.
fn eval_param(delta: f64, kappa: f64, xi: f64, u: f64) -> f64 {
    if u <= delta {
        let shape = (-(u / delta).ln()).powf(xi);
        1.0 - u - (1.0 - delta) * (-kappa * shape).exp()
    } else {
        let shape = (-((1.0 - u) / (1.0 - delta)).ln()).powf(1.0 / xi);
        u - delta * (-kappa.powf(-1.0 / xi) * shape).exp()
    }
}

/// Analytic gradient of the parametric family; the left derivative is
/// returned at the fulcrum. Evaluated in log space so the limits at the
/// interval ends come out right.
fn grad_param(delta: f64, kappa: f64, xi: f64, u: f64) -> f64 {
    if u <= delta {
        if u == 0.0 {
            // Limit of the left derivative at zero.
            return if xi > 1.0 || (xi == 1.0 && kappa > 1.0) {
                -1.0
            } else if xi == 1.0 && kappa == 1.0 {
                -1.0 / delta
            } else {
                f64::NEG_INFINITY
            };
        }
        if xi == 1.0 {
            return -1.0 - (1.0 - delta) * kappa * (u / delta).powf(kappa) / u;
        }
        let big_l = (delta / u).ln();
        let log_term = (1.0 - delta).ln() + (kappa * xi).ln() + (xi - 1.0) * big_l.ln()
            - kappa * big_l.powf(xi)
            - u.ln();
        -1.0 - log_term.exp()
    } else {
        if u == 1.0 {
            // Limit of the right derivative at one.
            return if xi > 1.0 || (xi == 1.0 && kappa > 1.0) {
                f64::INFINITY
            } else if xi == 1.0 && kappa == 1.0 {
                1.0 / (1.0 - delta)
            } else {
                1.0
            };
        }
        if xi == 1.0 {
            let y = (1.0 - u) / (1.0 - delta);
            return 1.0 + delta / (kappa * (1.0 - delta)) * y.powf(1.0 / kappa - 1.0);
        }
        let big_m = -((1.0 - u) / (1.0 - delta)).ln();
        let c = kappa.powf(-1.0 / xi);
        let log_term = delta.ln() + (c / xi).ln() + (1.0 / xi - 1.0) * big_m.ln()
            - c * big_m.powf(1.0 / xi)
            - (1.0 - u).ln();
        1.0 + log_term.exp()
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v < 0.0 && v > -BOUNDARY_EPS {
        0.0
    } else if v > 1.0 && v < 1.0 + BOUNDARY_EPS {
        1.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "fulcrum delta must lie in (0,1), got {delta}"
        )));
    }
    Ok(())
}

fn check_positive(value: f64, name: &str) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::InvalidSpec(format!("{name} must be positive, got {value}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct VtRepr<'a> {
    kind: &'a str,
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi: Option<f64>,
}

impl Serialize for VTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match *self {
            Self::Linear { delta } => VtRepr {
                kind: "linear",
                delta,
                kappa: None,
                xi: None,
            },
            Self::TwoParam { delta, kappa } => VtRepr {
                kind: "two_param",
                delta,
                kappa: Some(kappa),
                xi: None,
            },
            Self::ThreeParam { delta, kappa, xi } => VtRepr {
                kind: "three_param",
                delta,
                kappa: Some(kappa),
                xi: Some(xi),
            },
            Self::Generator { .. } => {
                return Err(serde::ser::Error::custom(
                    "generator v-transforms are not serializable",
                ))
            }
        };
        repr.serialize(serializer)
    }
}

#[derive(Deserialize)]
struct VtReprOwned {
    kind: String,
    delta: f64,
    kappa: Option<f64>,
    xi: Option<f64>,
}

impl<'de> Deserialize<'de> for VTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = VtReprOwned::deserialize(deserializer)?;
        let built = match repr.kind.as_str() {
            "linear" => {
                reject_fixed(repr.kappa, "kappa", "linear").map_err(D::Error::custom)?;
                reject_fixed(repr.xi, "xi", "linear").map_err(D::Error::custom)?;
                VTransform::linear(repr.delta)
            }
            "two_param" => {
                reject_fixed(repr.xi, "xi", "two_param").map_err(D::Error::custom)?;
                VTransform::two_param(repr.delta, repr.kappa.unwrap_or(1.0))
            }
            "three_param" => VTransform::three_param(
                repr.delta,
                repr.kappa.unwrap_or(1.0),
                repr.xi.unwrap_or(1.0),
            ),
            other => {
                return Err(D::Error::custom(format!(
                    "unknown v-transform kind `{other}` (expected linear, two_param or three_param)"
                )))
            }
        };
        built.map_err(D::Error::custom)
    }
}

fn reject_fixed(value: Option<f64>, name: &str, kind: &str) -> Result<()> {
    match value {
        None => Ok(()),
        Some(v) if v == 1.0 => Ok(()),
        Some(v) => Err(Error::InvalidSpec(format!(
            "{kind} v-transform fixes {name} = 1, got {v}"
        ))),
    }
}
