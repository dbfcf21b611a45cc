use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::family::Family;

const SIMPSON_INTERVALS: usize = 4000;
const Z_RANGE: f64 = 10.0;

/// Marginal standard deviation of `y` when the linear predictor is
/// `N(intercept, beta_norm²)`: `√(E[Var(y|η)] + Var(h(η)))`, by composite Simpson.
pub fn sigma_y_known(family: &Family, intercept: f64, beta_norm: f64) -> Result<f64> {
    if beta_norm == 0.0 {
        return Ok(family.variance(intercept)?.sqrt());
    }
    let h = 2.0 * Z_RANGE / SIMPSON_INTERVALS as f64;
    let (mut m1, mut m2, mut v) = (0.0, 0.0, 0.0);
    for k in 0..=SIMPSON_INTERVALS {
        let z = -Z_RANGE + k as f64 * h;
        let w = if k == 0 || k == SIMPSON_INTERVALS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let eta = intercept + beta_norm * z;
        let mu = family.mean(eta)?;
        let c = w * phi * h / 3.0;
        m1 += c * mu;
        m2 += c * mu * mu;
        v += c * family.variance_unchecked(eta);
    }
    let total = v + (m2 - m1 * m1).max(0.0);
    if !total.is_finite() {
        return Err(Error::Numeric("response variance is not finite".into()));
    }
    Ok(total.sqrt())
}

/// `√(mean_i φ·V(y_i))`, the variance function evaluated at the responses.
pub fn sigma_y_data(family: &Family, y: &DVector<f64>) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let s: f64 = y.iter().map(|&v| family.dispersion() * family.unit_variance(v)).sum();
    (s / y.len() as f64).sqrt()
}

/// `σ_y·√(log(n + d)/n)`, the λ of pre-factor 1.
pub fn lambda_base(sigma_y: f64, n: usize, d: usize) -> f64 {
    sigma_y * (((n + d) as f64).ln() / n as f64).sqrt()
}

/// `C·base` for every pre-factor `C`.
pub fn lambda_grid(prefactors: &[f64], base: f64) -> Vec<f64> {
    prefactors.iter().map(|c| c * base).collect()
}

/// `Σ_i d(μ*_i, μ̂_i)` with the family's unit deviance.
pub fn deviance_between_means(family: &Family, mu_star: &DVector<f64>, mu_hat: &DVector<f64>) -> Result<f64> {
    if mu_star.len() != mu_hat.len() {
        return Err(Error::invalid("mean vectors differ in length"));
    }
    mu_star.iter().zip(mu_hat.iter()).map(|(&a, &b)| family.unit_deviance(a, b)).sum()
}
