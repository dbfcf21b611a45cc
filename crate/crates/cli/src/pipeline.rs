//! Linkage-error injection, validation splits and validation-based λ choice.

use linkreg::estimators::{fit_penalized_constrained_from, fit_penalized_from};
use linkreg::simlab::{generate_permutation_blocks, replication_rng};
use linkreg::{fit_glm, BlockPartition, Family, GlmOptions, MergedDataset, PenalizedOptions};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::CliError;

/// Shuffle `y` uniformly within each block, keeping the original responses
/// as ground truth. Returns the merged file and the realized mismatch fraction.
pub fn inject_mismatch(data: &MergedDataset, blocks: &BlockPartition, seed: u64) -> Result<(MergedDataset, f64), CliError> {
    inject_mismatch_with(data, blocks, &mut replication_rng(seed, 0))
}

pub fn inject_mismatch_with<R: Rng + ?Sized>(
    data: &MergedDataset,
    blocks: &BlockPartition,
    rng: &mut R,
) -> Result<(MergedDataset, f64), CliError> {
    if blocks.n() != data.n() {
        return Err(CliError::Data(format!("blocks cover {} rows, data has {}", blocks.n(), data.n())));
    }
    let y_star = match &data.truth {
        Some(t) => t.y_star.clone(),
        None => data.y.clone(),
    };
    let pi = generate_permutation_blocks(blocks, rng);
    let y = DVector::from_fn(data.n(), |i, _| y_star[pi[i]]);
    let merged = MergedDataset { x: data.x.clone(), y, truth: None, blocks: None }
        .with_truth(y_star, pi)
        .and_then(|m| m.with_blocks(blocks.clone()))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let frac = merged.truth.as_ref().map_or(0.0, |t| t.mismatch_fraction());
    Ok((merged, frac))
}

/// Rows for a mismatch-free validation set of about `fraction·n` rows, drawn
/// as whole blocks. Singleton blocks are used first, in random order, then
/// larger blocks. Sorted ascending.
pub fn validation_rows<R: Rng + ?Sized>(blocks: &BlockPartition, fraction: f64, rng: &mut R) -> Vec<usize> {
    let target = (fraction * blocks.n() as f64).round() as usize;
    let mut singles: Vec<&Vec<usize>> = blocks.groups().iter().filter(|g| g.len() == 1).collect();
    let mut others: Vec<&Vec<usize>> = blocks.groups().iter().filter(|g| g.len() > 1).collect();
    singles.shuffle(rng);
    others.shuffle(rng);
    let mut rows = Vec::new();
    for g in singles.into_iter().chain(others) {
        if rows.len() >= target {
            break;
        }
        rows.extend_from_slice(g);
    }
    rows.sort_unstable();
    rows
}

pub fn complement(n: usize, rows: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &i in rows {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

pub fn select_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| v[rows[i]])
}

/// `Σ_i d(y_i, μ̂_i)` with `μ̂ = h(Xβ)`: the fit of `β` on a file with correct links.
pub fn deviance_on(family: &Family, x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> Result<f64, CliError> {
    let eta = x * beta;
    let mut total = 0.0;
    for (&yi, &e) in y.iter().zip(eta.iter()) {
        let mu = family.clamp_mean(family.mean_unchecked(e)).0;
        total += family.unit_deviance(yi, mu).map_err(|e| CliError::Numeric(e.to_string()))?;
    }
    Ok(total)
}

/// Outcome of [`select_lambda_validation`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub index: usize,
    /// Validation deviance per grid point; `None` where the fit failed.
    pub deviances: Vec<Option<f64>>,
}

/// Fit on `train` for every grid λ (under sum-zero constraints when `blocks`
/// is given) and keep the λ with the smallest deviance on `validation`.
/// Ties go to the larger λ.
pub fn select_lambda_validation(
    family: &Family,
    train: (&DMatrix<f64>, &DVector<f64>),
    validation: (&DMatrix<f64>, &DVector<f64>),
    grid: &[f64],
    blocks: Option<&BlockPartition>,
    opts: &PenalizedOptions,
) -> Result<LambdaSelection, CliError> {
    if grid.is_empty() {
        return Err(CliError::Config("method.lambda: empty grid".into()));
    }
    let (xt, yt) = train;
    let naive = fit_glm(family, xt, yt, None, &GlmOptions::default()).map_err(numeric)?;
    let mut deviances = Vec::with_capacity(grid.len());
    for &lam in grid {
        let fit = match blocks {
            Some(b) => fit_penalized_constrained_from(family, xt, yt, lam, b, &naive.beta, opts),
            None => fit_penalized_from(family, xt, yt, lam, &naive.beta, opts),
        };
        deviances.push(fit.ok().and_then(|f| deviance_on(family, validation.0, validation.1, &f.beta).ok()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, d) in deviances.iter().enumerate() {
        if let Some(v) = *d {
            let better = match best {
                None => true,
                Some((b, bv)) => v < bv || (v == bv && grid[k] > grid[b]),
            };
            if better {
                best = Some((k, v));
            }
        }
    }
    let (index, _) = best.ok_or_else(|| CliError::Numeric("every fit on the training rows failed".into()))?;
    Ok(LambdaSelection { lambda: grid[index], index, deviances })
}

pub(crate) fn numeric(e: linkreg::Error) -> CliError {
    match e {
        linkreg::Error::InvalidInput(m) => CliError::Data(m),
        other => CliError::Numeric(other.to_string()),
    }
}
