//! Penalized offsets under block sum-zero constraints.
//!
//! If linkage errors only permute responses within blocks `G_j`, the true
//! offsets sum to zero over every block, so the objective is minimized
//! subject to `C ξ = 0`. Offsets in singleton blocks are identically zero.
//!
//! Each outer iteration replaces the smooth loss in `ξ` by its second-order
//! Taylor model with diagonal curvature. Per block this leaves
//!
//! ```text
//! min Σ_i w_i/2 (t_i − a_i)² + λ|t_i|   subject to   Σ_i t_i = 0,
//! ```
//!
//! whose solution is `t_i(ν) = soft(a_i − ν/w_i, λ/w_i)` for the multiplier
//! `ν` at which the block sum vanishes. The sum is continuous, piecewise
//! linear and non-increasing in `ν`, so `ν` is found by bisection over the
//! sorted breakpoints followed by an exact linear solve on the final segment.
//! The model step is then backtracked on the true objective.

use nalgebra::{DMatrix, DVector};

use super::glm::fit_glm;
use super::penalized::{beta_update, objective, PenalizedFit, PenalizedOptions};
use crate::error::{Error, Result};
use crate::family::{eta_clamped, Family};
use crate::linalg::max_abs;
use crate::matching::BlockPartition;

const MIN_CURVATURE: f64 = 1e-12;

/// Minimize the penalized objective subject to per-block sum-zero offsets.
pub fn fit_penalized_constrained(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    blocks: &BlockPartition,
    opts: &PenalizedOptions,
) -> Result<PenalizedFit> {
    let naive = fit_glm(family, x, y, None, &opts.glm)?;
    fit_penalized_constrained_from(family, x, y, lambda, blocks, &naive.beta, opts)
}

pub fn fit_penalized_constrained_from(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    blocks: &BlockPartition,
    init_beta: &DVector<f64>,
    opts: &PenalizedOptions,
) -> Result<PenalizedFit> {
    let n = y.len();
    if blocks.n() != n {
        return Err(Error::invalid(format!("block partition covers {} rows, data has {n}", blocks.n())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let sqn = (n as f64).sqrt();
    let mut beta = init_beta.clone();
    let mut xi = DVector::zeros(n);
    let mut obj = objective(family, x, y, &beta, &xi, lambda)?;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let eta = x * &beta + &xi * sqn;
        let mut center = DVector::zeros(n);
        let mut curv = DVector::zeros(n);
        for i in 0..n {
            let g = family.loss_grad(y[i], eta[i]) / sqn;
            let w = family.loss_curvature(y[i], eta[i]).max(MIN_CURVATURE);
            center[i] = xi[i] - g / w;
            curv[i] = w;
        }
        let mut target = DVector::zeros(n);
        for g in blocks.groups() {
            if g.len() < 2 {
                continue;
            }
            let a: Vec<f64> = g.iter().map(|&i| center[i]).collect();
            let w: Vec<f64> = g.iter().map(|&i| curv[i]).collect();
            for (&i, t) in g.iter().zip(sum_zero_soft_threshold(&a, &w, lambda)) {
                target[i] = t;
            }
        }

        // Backtrack along the feasible segment xi -> target.
        let dir = &target - &xi;
        let mut new_xi = xi.clone();
        let mut alpha = 1.0;
        for _ in 0..=opts.max_halvings {
            let cand = &xi + &dir * alpha;
            match objective(family, x, y, &beta, &cand, lambda) {
                Ok(v) if v <= obj => {
                    new_xi = cand;
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        enforce_zeros(&mut new_xi, blocks);

        let new_beta = beta_update(family, x, y, &beta, &new_xi, opts.max_halvings)?;
        let new_obj = objective(family, x, y, &new_beta, &new_xi, lambda)?;
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

    let eta = x * &beta + &xi * sqn;
    let clamped_count = eta.iter().filter(|&&e| eta_clamped(e)).count();
    Ok(PenalizedFit { beta, xi, lambda, iterations, converged, objective_trace: trace, clamped_count })
}

fn enforce_zeros(xi: &mut DVector<f64>, blocks: &BlockPartition) {
    for g in blocks.groups() {
        if g.len() == 1 {
            xi[g[0]] = 0.0;
        }
    }
}

#[inline]
fn soft(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Solve `min Σ w_i/2 (t_i − a_i)² + λ Σ|t_i|` subject to `Σ t_i = 0`.
///
/// `weights` must be positive.
pub fn sum_zero_soft_threshold(center: &[f64], weights: &[f64], lambda: f64) -> Vec<f64> {
    let m = center.len();
    assert_eq!(m, weights.len());
    if m == 0 {
        return Vec::new();
    }
    let at = |nu: f64| -> Vec<f64> {
        center.iter().zip(weights).map(|(&a, &w)| soft(a - nu / w, lambda / w)).collect()
    };
    let sum_at = |nu: f64| -> f64 { at(nu).iter().sum() };

    // t_i(ν) has kinks where a_i − ν/w_i = ±λ/w_i.
    let mut bp: Vec<f64> = center
        .iter()
        .zip(weights)
        .flat_map(|(&a, &w)| [w * a - lambda, w * a + lambda])
        .collect();
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    let inv_w: f64 = weights.iter().map(|w| 1.0 / w).sum();

    let s_first = sum_at(bp[0]);
    if s_first <= 0.0 {
        // Left of all breakpoints every t_i is in its upper linear piece.
        let nu = bp[0] + s_first / inv_w;
        return at(nu);
    }
    let last = bp.len() - 1;
    let s_last = sum_at(bp[last]);
    if s_last >= 0.0 {
        let nu = bp[last] + s_last / inv_w;
        return at(nu);
    }
    // Invariant: sum(bp[lo]) > 0 > sum(bp[hi]).
    let (mut lo, mut hi) = (0usize, last);
    let (mut s_lo, mut s_hi) = (s_first, s_last);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let s = sum_at(bp[mid]);
        if s == 0.0 {
            return at(bp[mid]);
        }
        if s > 0.0 {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
            s_hi = s;
        }
    }
    let nu = bp[lo] + s_lo * (bp[hi] - bp[lo]) / (s_lo - s_hi);
    at(nu)
}
