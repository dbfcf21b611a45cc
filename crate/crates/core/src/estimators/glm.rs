//! Plain GLM fitting by Fisher scoring, with optional fixed offsets.
//!
//! Used for the naive fit (merged responses), the oracle fit (true
//! responses), the initialization of the penalized estimator, and refits
//! after permutation correction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{eta_clamped, Family};
use crate::linalg::{max_abs, spd_solve, weighted_gram};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Stop once `max|Δβ| ≤ tol·(1 + max|β|)`.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions { max_iter: 100, tol: 1e-11, max_halvings: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// `false` on divergence, separation or iteration exhaustion.
    pub converged: bool,
    /// Mean negative log-likelihood kernel at `beta`.
    pub loss: f64,
    pub clamped_count: usize,
}

/// `Σ loss(y_i, x_iᵀβ + o_i)`; `+∞` when any linear predictor is inadmissible.
pub fn total_loss(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    offsets: &DVector<f64>,
) -> f64 {
    let eta = x * beta + offsets;
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| if family.eta_admissible(e) { family.loss(yi, e) } else { f64::INFINITY })
        .sum()
}

/// Maximum-likelihood fit of `y ~ x` with fixed `offsets` added to the linear predictor.
pub fn fit_glm(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    offsets: Option<&DVector<f64>>,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::invalid("response length does not match design"));
    }
    if d == 0 || n < d {
        return Err(Error::invalid(format!("need n >= d >= 1, got n={n}, d={d}")));
    }
    let zero = DVector::zeros(n);
    let off = offsets.unwrap_or(&zero);
    if off.len() != n {
        return Err(Error::invalid("offset length does not match design"));
    }

    let mut beta = initial_beta(family, x, y, off)?;
    let mut loss = total_loss(family, x, y, &beta, off);
    if !loss.is_finite() {
        beta = DVector::zeros(d);
        loss = total_loss(family, x, y, &beta, off);
        if !loss.is_finite() {
            return Err(Error::Numeric("no admissible starting point for Fisher scoring".into()));
        }
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        // Weights collapsing mid-run (separation) end the run unconverged.
        let step = match fisher_step(family, x, y, &beta, off) {
            Ok(s) => s,
            Err(_) if iterations > 1 => break,
            Err(e) => return Err(e),
        };
        let small = max_abs(&step) <= opts.tol * (1.0 + max_abs(&beta));
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &beta + &step * alpha;
            let l = total_loss(family, x, y, &cand, off);
            if l.is_finite() && l <= loss {
                accepted = Some((cand, l));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((b, l)) => {
                let stalled = loss - l <= 4.0 * f64::EPSILON * loss.abs()
                    && max_abs(&step) <= 1e-9 * (1.0 + max_abs(&beta));
                beta = b;
                loss = l;
                if stalled {
                    converged = true;
                    break;
                }
            }
            None => {
                // No descent left: at the optimum up to rounding, or stalled.
                converged = small || max_abs(&step) <= 1e-6 * (1.0 + max_abs(&beta));
                break;
            }
        }
        if small {
            converged = true;
            break;
        }
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numeric("Fisher scoring diverged".into()));
    }
    let eta = x * &beta + off;
    let clamped_count = eta.iter().filter(|&&e| eta_clamped(e)).count();
    Ok(GlmFit { beta, iterations, converged, loss: loss / n as f64, clamped_count })
}

/// One Fisher-scoring direction `(XᵀWX)⁻¹ Xᵀ(-∂loss/∂η)` at `beta`.
pub(crate) fn fisher_step(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    off: &DVector<f64>,
) -> Result<DVector<f64>> {
    let eta = x * beta + off;
    let w = eta.map(|e| family.fisher_weight(e));
    let neg_grad = DVector::from_iterator(y.len(), eta.iter().zip(y.iter()).map(|(&e, &yi)| -family.loss_grad(yi, e)));
    let rhs = x.tr_mul(&neg_grad);
    spd_solve(weighted_gram(x, &w), &rhs, x, &w)
}

/// Weighted least squares on the working response at a pseudo-mean close to `y`.
fn initial_beta(family: &Family, x: &DMatrix<f64>, y: &DVector<f64>, off: &DVector<f64>) -> Result<DVector<f64>> {
    let n = y.len();
    let mut z = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let mu0 = family.initial_mean(y[i]);
        let (eta0, _) = family.linear_predictor_clamped(mu0);
        let dmu = family.dmu_deta(eta0);
        w[i] = family.fisher_weight(eta0);
        z[i] = eta0 + (y[i] - mu0) / dmu - off[i];
    }
    let wz = z.component_mul(&w);
    spd_solve(weighted_gram(x, &w), &x.tr_mul(&wz), x, &w)
}
