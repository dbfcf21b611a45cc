//! The ℓ1-penalized offset estimator.
//!
//! Every observation gets its own offset `√n·ξ_i` in the linear predictor and
//! the objective
//!
//! ```text
//! ℓ_pen(β, ξ) = (1/n) Σ loss(y_i, x_iᵀβ + √n ξ_i) + λ‖ξ‖₁
//! ```
//!
//! is minimized by block coordinate descent: an exact soft-threshold type
//! update of all `ξ_i` given `β`, then a damped Newton step in `β` on the
//! profile `min_ξ ℓ_pen`. A Fisher-scoring step with halving is the fallback.

use nalgebra::{DMatrix, DVector};

use super::glm::{fisher_step, fit_glm, GlmOptions};
use crate::error::{Error, Result};
use crate::family::{eta_clamped, Family, Link};
use crate::linalg::{max_abs, weighted_gram};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizedOptions {
    /// Bound on `max|θ^(t+1) − θ^(t)|`.
    pub tol: f64,
    /// Bound on the relative change of the objective.
    pub obj_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Options for the initial (naive) GLM fit.
    pub glm: GlmOptions,
}

impl Default for PenalizedOptions {
    fn default() -> Self {
        PenalizedOptions { tol: 1e-8, obj_tol: 1e-10, max_iter: 500, max_halvings: 30, glm: GlmOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub beta: DVector<f64>,
    /// Offsets on the `1/√n` scale: the linear predictor of row `i` is `x_iᵀβ + √n ξ_i`.
    pub xi: DVector<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at the start and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub clamped_count: usize,
}

impl PenalizedFit {
    /// `√n·ξ`, the fitted offsets on the linear-predictor scale.
    pub fn offsets(&self) -> DVector<f64> {
        &self.xi * (self.xi.len() as f64).sqrt()
    }

    /// Indices with `ξ_i ≠ 0`.
    pub fn support(&self) -> Vec<usize> {
        self.xi.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Smooth part `ℓ(β, ξ)`; `+∞` when some linear predictor is inadmissible.
pub fn smooth_loss(family: &Family, x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, xi: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let eta = x * beta + xi * n.sqrt();
    let s: f64 = eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &yi)| if family.eta_admissible(e) { family.loss(yi, e) } else { f64::INFINITY })
        .sum();
    s / n
}

/// The penalized objective `ℓ(β, ξ) + λ‖ξ‖₁`.
pub fn objective(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    xi: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    check_shapes(x, y, beta, xi)?;
    let eta = x * beta + xi * (y.len() as f64).sqrt();
    if let Some(&bad) = eta.iter().find(|&&e| !family.eta_admissible(e)) {
        return Err(Error::Domain { what: "linear predictor", value: bad });
    }
    Ok(smooth_loss(family, x, y, beta, xi) + lambda * xi.lp_norm(1))
}

/// Gradient of the smooth part: `((1/n) Xᵀr, r/√n)` with `r_i = ∂loss/∂η_i`.
pub fn smooth_gradient(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    xi: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = y.len() as f64;
    let eta = x * beta + xi * n.sqrt();
    let r = DVector::from_iterator(y.len(), eta.iter().zip(y.iter()).map(|(&e, &yi)| family.loss_grad(yi, e)));
    (x.tr_mul(&r) / n, r / n.sqrt())
}

/// `λ_max = ‖∇_ξ ℓ(β, 0)‖_∞`; for `λ > λ_max` at the naive fit the penalized
/// solution has `ξ = 0`.
pub fn lambda_max(family: &Family, x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let xi = DVector::zeros(y.len());
    let (_, g) = smooth_gradient(family, x, y, beta, &xi);
    max_abs(&g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiUpdate {
    pub value: f64,
    /// The inverse mean map was evaluated at a clamped argument.
    pub clamped: bool,
}

/// Exact minimizer over `t` of `(1/n)·loss(y, η + √n t) + λ|t|`.
///
/// For canonical links this is
/// `t = 1{|y − μ|/√n > λ} · ((ψ')⁻¹(y − s λ) − η)/√n` with `s = sign(y − μ)·√n`.
/// For the Gamma log link the stationarity condition `y·e^{-η'} = 1 + √n λ sign(t)`
/// is solved directly.
pub fn xi_update(family: &Family, y: f64, eta: f64, lambda: f64, n: usize) -> XiUpdate {
    let sqn = (n as f64).sqrt();
    let grad = family.loss_grad(y, eta);
    if grad.abs() <= sqn * lambda {
        return XiUpdate { value: 0.0, clamped: false };
    }
    let (target, clamped) = match family.link() {
        Link::Canonical => {
            let s = if y - family.mean_unchecked(eta) >= 0.0 { sqn } else { -sqn };
            family.linear_predictor_clamped(y - s * lambda)
        }
        Link::Log => {
            // grad = 1 − y/μ; negative means y above the mean and t > 0.
            let denom = if grad < 0.0 { 1.0 + sqn * lambda } else { 1.0 - sqn * lambda };
            let (mu, c) = family.clamp_mean(y / denom);
            (mu.ln(), c)
        }
    };
    XiUpdate { value: (target - eta) / sqn, clamped }
}

/// One Fisher-scoring step in `β` at fixed `ξ`, halving the step until the
/// smooth loss does not increase. Returns `β` unchanged if no halving helps.
pub fn beta_update(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    xi: &DVector<f64>,
    max_halvings: usize,
) -> Result<DVector<f64>> {
    let off = xi * (y.len() as f64).sqrt();
    let step = fisher_step(family, x, y, beta, &off)?;
    let base = smooth_loss(family, x, y, beta, xi);
    let mut alpha = 1.0;
    for _ in 0..=max_halvings {
        let cand = beta + &step * alpha;
        let l = smooth_loss(family, x, y, &cand, xi);
        if l.is_finite() && l <= base {
            return Ok(cand);
        }
        alpha *= 0.5;
    }
    Ok(beta.clone())
}

/// Minimize the penalized objective, starting from the naive GLM fit and `ξ = 0`.
pub fn fit_penalized(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    opts: &PenalizedOptions,
) -> Result<PenalizedFit> {
    let naive = fit_glm(family, x, y, None, &opts.glm)?;
    fit_penalized_from(family, x, y, lambda, &naive.beta, opts)
}

/// As [`fit_penalized`], with a caller-supplied starting `β` (normally the naive fit).
pub fn fit_penalized_from(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    init_beta: &DVector<f64>,
    opts: &PenalizedOptions,
) -> Result<PenalizedFit> {
    let n = y.len();
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let mut beta = init_beta.clone();
    let mut xi = DVector::zeros(n);
    check_shapes(x, y, &beta, &xi)?;

    let mut obj = objective(family, x, y, &beta, &xi, lambda)?;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut clamped = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let (new_xi, c) = xi_sweep(family, x, y, &beta, &xi, lambda);
        clamped = c;
        let xi_obj = objective(family, x, y, &beta, &new_xi, lambda)?;
        let (new_beta, new_xi, new_obj) =
            match best_profile_step(family, x, y, &beta, &new_xi, lambda, xi_obj, opts.max_halvings) {
                Some(next) => next,
                None => {
                    let b = beta_update(family, x, y, &beta, &new_xi, opts.max_halvings)?;
                    let o = objective(family, x, y, &b, &new_xi, lambda)?;
                    (b, new_xi, o)
                }
            };

        let delta = max_abs(&(&new_beta - &beta)).max(max_abs(&(&new_xi - &xi)));
        let rel = (obj - new_obj).abs() / obj.abs().max(1.0);
        beta = new_beta;
        xi = new_xi;
        obj = new_obj;
        trace.push(obj);
        if delta < opts.tol && rel <= opts.obj_tol {
            converged = true;
            break;
        }
    }

    let eta = x * &beta + &xi * (n as f64).sqrt();
    clamped += eta.iter().filter(|&&e| eta_clamped(e)).count();
    Ok(PenalizedFit { beta, xi, lambda, iterations, converged, objective_trace: trace, clamped_count: clamped })
}

/// Exact ξ update of every coordinate at `η = Xβ`. A clamped update is not the
/// exact minimizer, so it is kept only if it beats the previous value.
fn xi_sweep(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    prev: &DVector<f64>,
    lambda: f64,
) -> (DVector<f64>, usize) {
    let n = y.len();
    let eta = x * beta;
    let mut xi = DVector::zeros(n);
    let mut clamped = 0;
    for i in 0..n {
        let u = xi_update(family, y[i], eta[i], lambda, n);
        if u.clamped {
            clamped += 1;
            let c = |t: f64| coordinate_objective(family, y[i], eta[i], t, lambda, n);
            xi[i] = if c(u.value) <= c(prev[i]) { u.value } else { prev[i] };
        } else {
            xi[i] = u.value;
        }
    }
    (xi, clamped)
}

type Step = (DVector<f64>, DVector<f64>, f64);

/// The better of the plain and the majorized profile step.
#[allow(clippy::too_many_arguments)]
fn best_profile_step(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    xi: &DVector<f64>,
    lambda: f64,
    current: f64,
    max_halvings: usize,
) -> Option<Step> {
    let plain = profile_step(family, x, y, beta, xi, lambda, current, max_halvings, false);
    let major = profile_step(family, x, y, beta, xi, lambda, current, max_halvings, true);
    match (plain, major) {
        (Some(a), Some(b)) => Some(if a.2 <= b.2 { a } else { b }),
        (a, b) => a.or(b),
    }
}

/// Newton step on the profile `F(β) = min_ξ ℓ_pen(β, ξ)`.
///
/// Per observation the profile is the infimal convolution of the loss with
/// `√n λ|·|`, whose derivative in `η` is the loss gradient clipped to
/// `[-√n λ, √n λ]`. Where clipping is active the profile is linear in `η`;
/// with `majorize` the curvature `λ/|ξ_i|` of the quadratic majorizer of the
/// absolute value is used there instead of zero.
/// The step is backtracked on the penalized objective with `ξ` re-minimized
/// at each trial point. `None` when no trial point improves on `current`.
#[allow(clippy::too_many_arguments)]
fn profile_step(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    xi: &DVector<f64>,
    lambda: f64,
    current: f64,
    max_halvings: usize,
    majorize: bool,
) -> Option<Step> {
    let n = y.len();
    let cap = (n as f64).sqrt() * lambda;
    let eta = x * beta;
    let mut grad = DVector::zeros(n);
    let mut curv = DVector::zeros(n);
    for i in 0..n {
        let g = family.loss_grad(y[i], eta[i]);
        if g.abs() <= cap || xi[i] == 0.0 {
            grad[i] = g.clamp(-cap, cap);
            curv[i] = family.loss_curvature(y[i], eta[i]);
        } else {
            grad[i] = cap.copysign(g);
            curv[i] = if majorize { lambda / xi[i].abs().max(1e-12) } else { 0.0 };
        }
    }
    let rhs = -x.tr_mul(&grad);
    let step = regularized_solve(weighted_gram(x, &curv), &rhs)?;
    let mut alpha = 1.0;
    for _ in 0..=max_halvings {
        let cand = beta + &step * alpha;
        let (cxi, _) = xi_sweep(family, x, y, &cand, xi, lambda);
        if let Ok(v) = objective(family, x, y, &cand, &cxi, lambda) {
            if v <= current {
                return Some((cand, cxi, v));
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Solve `(A + τI) z = b` for the smallest `τ ∈ {0, 1e-12·s, 1e-10·s, …}` that
/// makes the matrix numerically positive definite, `s = max(1, max diag A)`.
fn regularized_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let s = a.diagonal().amax().max(1.0);
    let d = a.nrows();
    let mut tau = 0.0;
    for _ in 0..8 {
        let mut m = a.clone();
        for j in 0..d {
            m[(j, j)] += tau;
        }
        if let Some(ch) = m.cholesky() {
            let piv = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |p, &v| p.min(v));
            if piv * piv > 1e-14 * s {
                let z = ch.solve(b);
                if z.iter().all(|v| v.is_finite()) {
                    return Some(z);
                }
            }
        }
        tau = if tau == 0.0 { 1e-12 * s } else { tau * 100.0 };
    }
    None
}

/// The `i`-th coordinate of the objective as a function of `t = ξ_i`.
pub fn coordinate_objective(family: &Family, y: f64, eta: f64, t: f64, lambda: f64, n: usize) -> f64 {
    let nf = n as f64;
    let e = eta + nf.sqrt() * t;
    let l = if family.eta_admissible(e) { family.loss(y, e) } else { f64::INFINITY };
    l / nf + lambda * t.abs()
}

fn check_shapes(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, xi: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() || xi.len() != y.len() || beta.len() != x.ncols() {
        return Err(Error::invalid(format!(
            "shape mismatch: X is {}x{}, y has {}, beta has {}, xi has {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            beta.len(),
            xi.len()
        )));
    }
    Ok(())
}
