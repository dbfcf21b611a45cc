//! Estimating-equation baselines for block-structured linkage.
//!
//! Both estimators use the block averaging operator `Q`, which replaces each
//! entry by the mean over its block. With `μ(β) = h(Xβ)`:
//!
//! * Lahiri-Larsen solves `Xᵀ Q (y − Q μ(β)) = 0`,
//! * Chambers solves `Xᵀ (y − Q μ(β)) = 0`.
//!
//! Both are solved by damped Newton iterations. Failure to find a root is
//! reported through [`SolveStatus`], never as an error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_glm, GlmOptions};
use crate::family::{Family, FamilyKind};
use crate::linalg::{inverse, lu_solve, max_abs, spd_solve, symmetrize};
use crate::matching::BlockPartition;

/// The block averaging projection `Q`, applied through block means.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOperator {
    blocks: BlockPartition,
}

impl ExchangeOperator {
    pub fn new(blocks: BlockPartition) -> Self {
        ExchangeOperator { blocks }
    }

    pub fn blocks(&self) -> &BlockPartition {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.blocks.n()
    }

    /// `Q v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for g in self.blocks.groups() {
            let mean = g.iter().map(|&i| v[i]).sum::<f64>() / g.len() as f64;
            for &i in g {
                out[i] = mean;
            }
        }
        out
    }

    /// `Q A`, column by column.
    pub fn apply_rows(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(a.nrows(), a.ncols());
        for g in self.blocks.groups() {
            let inv = 1.0 / g.len() as f64;
            for c in 0..a.ncols() {
                let mean = g.iter().map(|&i| a[(i, c)]).sum::<f64>() * inv;
                for &i in g {
                    out[(i, c)] = mean;
                }
            }
        }
        out
    }

    /// Dense `n × n` materialization; for testing only.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut q = DMatrix::zeros(n, n);
        for g in self.blocks.groups() {
            let v = 1.0 / g.len() as f64;
            for &i in g {
                for &j in g {
                    q[(i, j)] = v;
                }
            }
        }
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    SingularJacobian,
    /// Backtracking could not reduce the residual norm.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Converged when `‖Γ‖∞ < tol`.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iter: 100, tol: 1e-8, max_halvings: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Damped Newton for `Γ(β) = 0`. `eval` returns `(Γ(β), ∂Γ/∂β)`; an error
/// from `eval` marks `β` as outside the domain during backtracking.
pub fn newton_solve<F>(mut eval: F, init: DVector<f64>, opts: &NewtonOptions) -> Result<NewtonResult>
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let mut x = init;
    let (mut g, mut j) = eval(&x)?;
    let mut norm = g.norm();
    let mut iterations = 0;
    loop {
        let residual = max_abs(&g);
        if residual < opts.tol {
            return Ok(NewtonResult { x, residual, iterations, status: SolveStatus::Converged });
        }
        if iterations >= opts.max_iter {
            return Ok(NewtonResult { x, residual, iterations, status: SolveStatus::MaxIterations });
        }
        iterations += 1;
        let Some(step) = lu_solve(j.clone(), &(-&g)) else {
            return Ok(NewtonResult { x, residual, iterations, status: SolveStatus::SingularJacobian });
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &x + &step * alpha;
            if let Ok((gc, jc)) = eval(&cand) {
                let nc = gc.norm();
                if nc.is_finite() && nc < norm {
                    accepted = Some((cand, gc, jc, nc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xc, gc, jc, nc)) => {
                x = xc;
                g = gc;
                j = jc;
                norm = nc;
            }
            None => return Ok(NewtonResult { x, residual, iterations, status: SolveStatus::Stalled }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatingEquationFit {
    pub beta: DVector<f64>,
    /// Sandwich covariance; `None` when the Jacobian is singular at `beta`.
    pub covariance: Option<DMatrix<f64>>,
    pub converged: bool,
    pub newton_iterations: usize,
    /// `‖Γ(β̂)‖∞`.
    pub equation_residual: f64,
    pub status: SolveStatus,
    /// The covariance leaves out the unspecified positive semidefinite
    /// correction term, so it is a lower bound (Chambers only).
    pub xi_term_omitted: bool,
    /// Deviance of the fitted means on `y` exceeds that of the intercept-only model.
    pub worse_than_null: bool,
}

impl EstimatingEquationFit {
    /// Converged and not worse than the intercept-only model.
    pub fn is_usable(&self) -> bool {
        self.converged && !self.worse_than_null
    }
}

fn check(x: &DMatrix<f64>, y: &DVector<f64>, q: &ExchangeOperator, beta: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() || q.n() != y.len() || x.ncols() != beta.len() {
        return Err(Error::invalid("shape mismatch in estimating equation"));
    }
    Ok(())
}

fn means(family: &Family, x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let eta = x * beta;
    if let Some(&bad) = eta.iter().find(|&&e| !family.eta_admissible(e)) {
        return Err(Error::Domain { what: "linear predictor", value: bad });
    }
    Ok((eta.map(|e| family.mean_unchecked(e)), eta))
}

/// `Xᵀ Q (y − Q μ(β))`.
pub fn ll_equation(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    q: &ExchangeOperator,
    beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    check(x, y, q, beta)?;
    let (mu, _) = means(family, x, beta)?;
    let qx = q.apply_rows(x);
    Ok(qx.tr_mul(&(y - q.apply(&mu))))
}

/// `Xᵀ (y − Q μ(β))`.
pub fn chambers_equation(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    q: &ExchangeOperator,
    beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    check(x, y, q, beta)?;
    let (mu, _) = means(family, x, beta)?;
    Ok(x.tr_mul(&(y - q.apply(&mu))))
}

/// `Xᵀ Q D X` with `D = diag(dμ/dη)`, the negated Jacobian shared by both equations.
fn bread(family: &Family, x: &DMatrix<f64>, qx: &DMatrix<f64>, eta: &DVector<f64>) -> DMatrix<f64> {
    let mut dx = x.clone();
    for (mut row, &e) in dx.row_iter_mut().zip(eta.iter()) {
        row *= family.dmu_deta(e);
    }
    qx.tr_mul(&dx)
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Ll,
    Chambers,
}

fn solve(
    kind: Kind,
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    q: &ExchangeOperator,
    init: DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let qx = q.apply_rows(x);
    let eval = |b: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mu, eta) = means(family, x, b)?;
        let r = y - q.apply(&mu);
        let g = match kind {
            Kind::Ll => qx.tr_mul(&r),
            Kind::Chambers => x.tr_mul(&r),
        };
        Ok((g, -bread(family, x, &qx, &eta)))
    };
    newton_solve(eval, init, opts)
}

fn start(family: &Family, x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    match fit_glm(family, x, y, None, &GlmOptions::default()) {
        Ok(f) if f.beta.iter().all(|v| v.is_finite()) => f.beta,
        _ => DVector::zeros(x.ncols()),
    }
}

fn worse_than_null(family: &Family, x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> bool {
    let Ok((mu, _)) = means(family, x, beta) else { return true };
    let ybar = family.clamp_mean(y.mean()).0;
    let mut fit = 0.0;
    let mut null = 0.0;
    for i in 0..y.len() {
        let m = family.clamp_mean(mu[i]).0;
        fit += family.unit_deviance(y[i], m).unwrap_or(f64::INFINITY);
        null += family.unit_deviance(y[i], ybar).unwrap_or(f64::INFINITY);
    }
    !matches!(fit.partial_cmp(&null), Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal))
}

/// Lahiri-Larsen estimator with block averaging operator `Q`.
///
/// For the Gaussian family the closed form `(XᵀQX)⁻¹XᵀQy` is returned.
pub fn fit_ll(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    blocks: &BlockPartition,
    opts: &NewtonOptions,
) -> Result<EstimatingEquationFit> {
    let q = ExchangeOperator::new(blocks.clone());
    check(x, y, &q, &DVector::zeros(x.ncols()))?;
    let qx = q.apply_rows(x);
    let (beta, iterations, status) = if family.kind() == FamilyKind::Gaussian {
        let ones = DVector::from_element(y.len(), 1.0);
        let b = spd_solve(qx.tr_mul(&qx), &qx.tr_mul(y), &qx, &ones)?;
        (b, 0, SolveStatus::Converged)
    } else {
        let r = solve(Kind::Ll, family, x, y, &q, start(family, x, y), opts)?;
        (r.x, r.iterations, r.status)
    };
    let residual = ll_equation(family, x, y, &q, &beta).map(|g| max_abs(&g)).unwrap_or(f64::INFINITY);
    let covariance = means(family, x, &beta).ok().and_then(|(_, eta)| {
        let v = eta.map(|e| family.variance_unchecked(e));
        let mut vqx = qx.clone();
        for (mut row, &vi) in vqx.row_iter_mut().zip(v.iter()) {
            row *= vi;
        }
        sandwich(&bread(family, x, &qx, &eta), &qx.tr_mul(&vqx))
    });
    Ok(EstimatingEquationFit {
        worse_than_null: worse_than_null(family, x, y, &beta),
        beta,
        covariance,
        converged: status == SolveStatus::Converged,
        newton_iterations: iterations,
        equation_residual: residual,
        status,
        xi_term_omitted: false,
    })
}

/// Chambers estimator. The middle term of the covariance uses the linkage
/// `pi` (`y_i` belongs to unit `pi[i]`) when supplied, else the identity.
pub fn fit_chambers(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    blocks: &BlockPartition,
    pi: Option<&[usize]>,
    opts: &NewtonOptions,
) -> Result<EstimatingEquationFit> {
    let q = ExchangeOperator::new(blocks.clone());
    check(x, y, &q, &DVector::zeros(x.ncols()))?;
    if let Some(p) = pi {
        if p.len() != y.len() || !crate::estimators::is_permutation(p) {
            return Err(Error::invalid("pi is not a permutation of the rows"));
        }
    }
    let r = solve(Kind::Chambers, family, x, y, &q, start(family, x, y), opts)?;
    let qx = q.apply_rows(x);
    let covariance = means(family, x, &r.x).ok().and_then(|(_, eta)| {
        let d = x.ncols();
        let mut meat = DMatrix::zeros(d, d);
        for i in 0..y.len() {
            let row = x.row(pi.map_or(i, |p| p[i])).transpose();
            meat += &row * row.transpose() * family.variance_unchecked(eta[i]);
        }
        sandwich(&bread(family, x, &qx, &eta), &meat)
    });
    Ok(EstimatingEquationFit {
        worse_than_null: worse_than_null(family, x, y, &r.x),
        beta: r.x,
        covariance,
        converged: r.status == SolveStatus::Converged,
        newton_iterations: r.iterations,
        equation_residual: r.residual,
        status: r.status,
        xi_term_omitted: true,
    })
}

/// `A⁻¹ B A⁻ᵀ`, symmetrized.
fn sandwich(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ai = inverse(a.clone())?;
    let mut c = &ai * b * ai.transpose();
    symmetrize(&mut c);
    Some(c)
}
