//! Exponential-family kernel.
//!
//! A [`Family`] bundles the cumulant `ψ`, the mean map `h = ψ'`, its inverse
//! `g`, the variance function and the (fixed, known) dispersion. Everything the
//! estimators need is expressed through three per-observation quantities of the
//! negative log-likelihood kernel in the linear predictor `η`:
//!
//! * [`Family::loss`]: `-y·η + ψ(η)` for canonical links,
//! * [`Family::loss_grad`]: its first derivative in `η`,
//! * [`Family::loss_curvature`]: its second derivative in `η`.
//!
//! Gamma with the log link is not canonical. For it the kernel is the negative
//! log-likelihood in mean parameterization, `y·exp(-η) + η`, with the
//! dispersion dropped.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

/// Linear predictors are clamped to `[-ETA_CLAMP, ETA_CLAMP]` before exponentiation.
pub const ETA_CLAMP: f64 = 700.0;

/// Distance kept from the boundary of the mean space when clamping.
pub const MEAN_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Gaussian,
    Poisson,
    Binomial,
    Bernoulli,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Canonical,
    /// Only meaningful for Gamma; for Poisson the log link is the canonical one.
    Log,
}

/// Exponential-family response distribution with known dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilySpec", into = "FamilySpec")]
pub struct Family {
    kind: FamilyKind,
    dispersion: f64,
    trials: u32,
    link: Link,
}

/// Serialized form of a [`Family`]. Gamma accepts `shape` in place of `dispersion`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u32>,
    #[serde(default)]
    pub link: Link,
}

impl TryFrom<FamilySpec> for Family {
    type Error = Error;

    fn try_from(s: FamilySpec) -> Result<Family> {
        let dispersion = match (s.dispersion, s.shape) {
            (Some(_), Some(_)) => return Err(Error::invalid("give either dispersion or shape, not both")),
            (None, Some(nu)) if s.kind == FamilyKind::Gamma => 1.0 / nu,
            (None, Some(_)) => return Err(Error::invalid("shape is only meaningful for gamma")),
            (Some(d), None) => d,
            (None, None) => 1.0,
        };
        if !(dispersion.is_finite() && dispersion > 0.0) {
            return Err(Error::invalid(format!("dispersion must be positive, got {dispersion}")));
        }
        let discrete = matches!(s.kind, FamilyKind::Poisson | FamilyKind::Binomial | FamilyKind::Bernoulli);
        if discrete && dispersion != 1.0 {
            return Err(Error::invalid(format!("{:?} has dispersion fixed at 1", s.kind)));
        }
        if s.trials.is_some() && s.kind != FamilyKind::Binomial {
            return Err(Error::invalid("trials is only meaningful for binomial"));
        }
        Family::new(s.kind, dispersion, s.trials.unwrap_or(0), s.link)
    }
}

impl From<Family> for FamilySpec {
    fn from(f: Family) -> FamilySpec {
        FamilySpec {
            kind: f.kind,
            dispersion: matches!(f.kind, FamilyKind::Gaussian | FamilyKind::Gamma).then_some(f.dispersion),
            shape: None,
            trials: (f.kind == FamilyKind::Binomial).then_some(f.trials),
            link: f.link,
        }
    }
}

impl Family {
    /// Validating constructor. `dispersion` is σ² for Gaussian, 1/ν for Gamma
    /// and must be 1 for the discrete families.
    pub fn new(kind: FamilyKind, dispersion: f64, trials: u32, link: Link) -> Result<Self> {
        if !(dispersion.is_finite() && dispersion > 0.0) {
            return Err(Error::invalid(format!("dispersion must be positive, got {dispersion}")));
        }
        let link = match (kind, link) {
            (FamilyKind::Poisson, Link::Log) => Link::Canonical,
            (FamilyKind::Gamma, l) => l,
            (_, Link::Canonical) => Link::Canonical,
            (k, Link::Log) => {
                return Err(Error::invalid(format!("log link is not supported for {k:?}")))
            }
        };
        let trials = match kind {
            FamilyKind::Binomial if trials == 0 => {
                return Err(Error::invalid("binomial trials must be at least 1"))
            }
            FamilyKind::Binomial => trials,
            _ => 1,
        };
        let dispersion = match kind {
            FamilyKind::Gaussian | FamilyKind::Gamma => dispersion,
            _ => 1.0,
        };
        Ok(Family { kind, dispersion, trials, link })
    }

    /// Gaussian with identity link and variance `sigma2`.
    pub fn gaussian(sigma2: f64) -> Self {
        Self::new(FamilyKind::Gaussian, sigma2, 1, Link::Canonical).expect("positive variance")
    }

    pub fn poisson() -> Self {
        Family { kind: FamilyKind::Poisson, dispersion: 1.0, trials: 1, link: Link::Canonical }
    }

    pub fn binomial(trials: u32) -> Self {
        Self::new(FamilyKind::Binomial, 1.0, trials, Link::Canonical).expect("trials >= 1")
    }

    pub fn bernoulli() -> Self {
        Family { kind: FamilyKind::Bernoulli, dispersion: 1.0, trials: 1, link: Link::Canonical }
    }

    /// Gamma with shape `nu` (mean μ, variance μ²/ν) and log link.
    pub fn gamma_log(nu: f64) -> Self {
        Self::new(FamilyKind::Gamma, 1.0 / nu, 1, Link::Log).expect("positive shape")
    }

    /// Gamma with shape `nu` and canonical (negative inverse) link.
    pub fn gamma_canonical(nu: f64) -> Self {
        Self::new(FamilyKind::Gamma, 1.0 / nu, 1, Link::Canonical).expect("positive shape")
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    pub fn trials(&self) -> u32 {
        self.trials
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn is_canonical(&self) -> bool {
        self.link == Link::Canonical
    }

    fn m(&self) -> f64 {
        self.trials as f64
    }

    /// Whether `eta` lies in the admissible linear-predictor domain.
    pub fn eta_admissible(&self, eta: f64) -> bool {
        match (self.kind, self.link) {
            (FamilyKind::Gamma, Link::Canonical) => eta.is_finite() && eta < 0.0,
            _ => eta.is_finite(),
        }
    }

    fn check_eta(&self, eta: f64) -> Result<()> {
        if self.eta_admissible(eta) {
            Ok(())
        } else {
            Err(Error::Domain { what: "linear predictor", value: eta })
        }
    }

    /// Whether `y` is in the support of the response.
    pub fn in_support(&self, y: f64) -> bool {
        if !y.is_finite() {
            return false;
        }
        match self.kind {
            FamilyKind::Gaussian => true,
            FamilyKind::Poisson => y >= 0.0,
            FamilyKind::Binomial | FamilyKind::Bernoulli => (0.0..=self.m()).contains(&y),
            FamilyKind::Gamma => y > 0.0,
        }
    }

    /// Whether `mu` lies in the open mean space.
    pub fn mean_admissible(&self, mu: f64) -> bool {
        if !mu.is_finite() {
            return false;
        }
        match self.kind {
            FamilyKind::Gaussian => true,
            FamilyKind::Poisson | FamilyKind::Gamma => mu > 0.0,
            FamilyKind::Binomial | FamilyKind::Bernoulli => mu > 0.0 && mu < self.m(),
        }
    }

    /// Clamp `mu` into the open mean space, keeping [`MEAN_EPS`] from the boundary.
    pub fn clamp_mean(&self, mu: f64) -> (f64, bool) {
        let (lo, hi) = match self.kind {
            FamilyKind::Gaussian => return (mu, false),
            FamilyKind::Poisson | FamilyKind::Gamma => (MEAN_EPS, f64::INFINITY),
            FamilyKind::Binomial | FamilyKind::Bernoulli => (MEAN_EPS, self.m() - MEAN_EPS),
        };
        if mu < lo {
            (lo, true)
        } else if mu > hi {
            (hi, true)
        } else {
            (mu, false)
        }
    }

    /// The cumulant ψ(θ) at natural parameter θ.
    pub fn cumulant(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::Domain { what: "natural parameter", value: theta });
        }
        Ok(match self.kind {
            FamilyKind::Gaussian => 0.5 * theta * theta,
            FamilyKind::Poisson => clamped_exp(theta),
            FamilyKind::Binomial | FamilyKind::Bernoulli => self.m() * softplus(theta),
            FamilyKind::Gamma => {
                if theta >= 0.0 {
                    return Err(Error::Domain { what: "natural parameter", value: theta });
                }
                -(-theta).ln()
            }
        })
    }

    /// Mean map `h(η)`; no domain check. Exponentials are clamped.
    #[inline]
    pub fn mean_unchecked(&self, eta: f64) -> f64 {
        match (self.kind, self.link) {
            (FamilyKind::Gaussian, _) => eta,
            (FamilyKind::Poisson, _) | (FamilyKind::Gamma, Link::Log) => clamped_exp(eta),
            (FamilyKind::Binomial | FamilyKind::Bernoulli, _) => self.m() * logistic(eta),
            (FamilyKind::Gamma, Link::Canonical) => -1.0 / eta,
        }
    }

    /// Mean map `h(η)`.
    pub fn mean(&self, eta: f64) -> Result<f64> {
        self.check_eta(eta)?;
        Ok(self.mean_unchecked(eta))
    }

    /// Link `g(μ) = h⁻¹(μ)`.
    pub fn linear_predictor(&self, mu: f64) -> Result<f64> {
        if !self.mean_admissible(mu) {
            return Err(Error::Domain { what: "mean", value: mu });
        }
        Ok(self.link_unchecked(mu))
    }

    #[inline]
    fn link_unchecked(&self, mu: f64) -> f64 {
        match (self.kind, self.link) {
            (FamilyKind::Gaussian, _) => mu,
            (FamilyKind::Poisson, _) | (FamilyKind::Gamma, Link::Log) => mu.ln(),
            (FamilyKind::Binomial | FamilyKind::Bernoulli, _) => (mu / (self.m() - mu)).ln(),
            (FamilyKind::Gamma, Link::Canonical) => -1.0 / mu,
        }
    }

    /// `g(μ)` after clamping μ into the open mean space; the flag reports clamping.
    pub fn linear_predictor_clamped(&self, mu: f64) -> (f64, bool) {
        let (mu, clamped) = self.clamp_mean(mu);
        (self.link_unchecked(mu), clamped)
    }

    /// Unit variance function V(μ) (dispersion excluded).
    pub fn unit_variance(&self, mu: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => 1.0,
            FamilyKind::Poisson => mu,
            FamilyKind::Binomial | FamilyKind::Bernoulli => mu * (1.0 - mu / self.m()),
            FamilyKind::Gamma => mu * mu,
        }
    }

    /// `Var(y | η)` including dispersion; no domain check.
    #[inline]
    pub fn variance_unchecked(&self, eta: f64) -> f64 {
        self.dispersion * self.unit_variance(self.mean_unchecked(eta))
    }

    /// `Var(y | η)` including dispersion.
    pub fn variance(&self, eta: f64) -> Result<f64> {
        self.check_eta(eta)?;
        Ok(self.variance_unchecked(eta))
    }

    /// `dμ/dη`. Equals ψ''(η) for canonical links.
    #[inline]
    pub fn dmu_deta(&self, eta: f64) -> f64 {
        match (self.kind, self.link) {
            (FamilyKind::Gaussian, _) => 1.0,
            (FamilyKind::Poisson, _) | (FamilyKind::Gamma, Link::Log) => clamped_exp(eta),
            (FamilyKind::Binomial | FamilyKind::Bernoulli, _) => {
                let p = logistic(eta);
                self.m() * p * (1.0 - p)
            }
            (FamilyKind::Gamma, Link::Canonical) => 1.0 / (eta * eta),
        }
    }

    /// Expected information per unit dispersion, `(dμ/dη)² / V(μ)`.
    #[inline]
    pub fn fisher_weight(&self, eta: f64) -> f64 {
        match self.link {
            Link::Canonical => self.dmu_deta(eta),
            Link::Log => 1.0,
        }
    }

    /// Negative log-likelihood kernel of one observation; `+∞` outside the domain.
    #[inline]
    pub fn loss(&self, y: f64, eta: f64) -> f64 {
        match (self.kind, self.link) {
            (FamilyKind::Gaussian, _) => -y * eta + 0.5 * eta * eta,
            (FamilyKind::Poisson, _) => -y * eta + clamped_exp(eta),
            (FamilyKind::Binomial | FamilyKind::Bernoulli, _) => -y * eta + self.m() * softplus(eta),
            (FamilyKind::Gamma, Link::Canonical) => {
                if eta < 0.0 {
                    -y * eta - (-eta).ln()
                } else {
                    f64::INFINITY
                }
            }
            (FamilyKind::Gamma, Link::Log) => y * clamped_exp(-eta) + eta,
        }
    }

    /// First derivative of [`Family::loss`] in `η`.
    #[inline]
    pub fn loss_grad(&self, y: f64, eta: f64) -> f64 {
        match self.link {
            Link::Canonical => self.mean_unchecked(eta) - y,
            Link::Log => 1.0 - y * clamped_exp(-eta),
        }
    }

    /// Second derivative of [`Family::loss`] in `η`.
    #[inline]
    pub fn loss_curvature(&self, y: f64, eta: f64) -> f64 {
        match self.link {
            Link::Canonical => self.dmu_deta(eta),
            Link::Log => y * clamped_exp(-eta),
        }
    }

    /// A starting mean for iterative fitting, inside the open mean space.
    pub fn initial_mean(&self, y: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => y,
            FamilyKind::Poisson => y + 0.1,
            FamilyKind::Binomial | FamilyKind::Bernoulli => (y + 0.5) / (self.m() + 1.0) * self.m(),
            FamilyKind::Gamma => y.max(MEAN_EPS),
        }
    }

    /// One-sided tail probability of `y` under the model with linear predictor `eta`:
    /// `P(Y ≥ y)` when `y ≥ h(η)`, else `P(Y ≤ y)`.
    pub fn tail_probability(&self, eta: f64, y: f64) -> Result<f64> {
        let mu = self.mean(eta)?;
        if y.is_nan() {
            return Err(Error::Numeric("tail probability of NaN".into()));
        }
        let upper = y >= mu;
        let p = match self.kind {
            FamilyKind::Gaussian => {
                let z = (y - mu) / self.dispersion.sqrt();
                if upper {
                    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
                } else {
                    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
                }
            }
            FamilyKind::Poisson => {
                if upper {
                    let k = y.ceil();
                    if k <= 0.0 {
                        1.0
                    } else {
                        gamma_lr(k, mu)
                    }
                } else {
                    let k = y.floor();
                    if k < 0.0 {
                        0.0
                    } else {
                        gamma_ur(k + 1.0, mu)
                    }
                }
            }
            FamilyKind::Binomial | FamilyKind::Bernoulli => {
                let m = self.m();
                let p = mu / m;
                if upper {
                    let k = y.ceil();
                    if k <= 0.0 {
                        1.0
                    } else if k > m {
                        0.0
                    } else {
                        beta_reg(k, m - k + 1.0, p)
                    }
                } else {
                    let k = y.floor();
                    if k < 0.0 {
                        0.0
                    } else if k >= m {
                        1.0
                    } else {
                        beta_reg(m - k, k + 1.0, 1.0 - p)
                    }
                }
            }
            FamilyKind::Gamma => {
                if y <= 0.0 {
                    0.0
                } else {
                    let shape = 1.0 / self.dispersion;
                    let x = y * shape / mu;
                    if upper {
                        gamma_ur(shape, x)
                    } else {
                        gamma_lr(shape, x)
                    }
                }
            }
        };
        if p.is_finite() {
            Ok(p.clamp(0.0, 1.0))
        } else {
            Err(Error::Numeric(format!("tail probability at eta={eta}, y={y} is {p}")))
        }
    }

    /// Unit deviance `d(y, μ)`, twice the log-likelihood ratio of the saturated
    /// model. Dispersion is not applied.
    pub fn unit_deviance(&self, y: f64, mu: f64) -> Result<f64> {
        if !self.in_support(y) {
            return Err(Error::Domain { what: "response", value: y });
        }
        if !self.mean_admissible(mu) {
            return Err(Error::Domain { what: "mean", value: mu });
        }
        let d = match self.kind {
            FamilyKind::Gaussian => (y - mu) * (y - mu),
            FamilyKind::Poisson => 2.0 * (xlogx_over(y, mu) - (y - mu)),
            FamilyKind::Binomial | FamilyKind::Bernoulli => {
                let m = self.m();
                2.0 * (xlogx_over(y, mu) + xlogx_over(m - y, m - mu))
            }
            FamilyKind::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
        };
        Ok(d.max(0.0))
    }
}

#[inline]
pub(crate) fn clamped_exp(x: f64) -> f64 {
    x.clamp(-ETA_CLAMP, ETA_CLAMP).exp()
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x·log(x/y)` with the continuous extension `0` at `x = 0`.
#[inline]
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Whether `|eta|` exceeds [`ETA_CLAMP`], i.e. exponentials at `eta` were clamped.
#[inline]
pub fn eta_clamped(eta: f64) -> bool {
    eta.abs() > ETA_CLAMP
}
