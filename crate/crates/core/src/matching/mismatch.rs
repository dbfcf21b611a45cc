use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::permutation::{pair_ranks, PermutationEstimate};
use super::BlockPartition;
use crate::error::{Error, Result};
use crate::family::Family;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchRule {
    /// The `k` smallest p-values; ties go to the lower index.
    TopK(usize),
    /// Every `i` with `p_i ≤ τ`.
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub p_values: Vec<f64>,
    /// Ascending indices.
    pub selected: Vec<usize>,
    pub rule: MismatchRule,
}

/// Flag rows whose response is implausible under its own linear predictor.
pub fn detect_mismatches(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    rule: MismatchRule,
) -> Result<MismatchReport> {
    if x.ncols() != beta.len() || x.nrows() != y.len() {
        return Err(Error::invalid("shape mismatch in detect_mismatches"));
    }
    let eta = x * beta;
    let p_values = eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &yi)| family.tail_probability(e, yi))
        .collect::<Result<Vec<f64>>>()?;
    let selected = select(&p_values, rule)?;
    Ok(MismatchReport { p_values, selected, rule })
}

fn select(p: &[f64], rule: MismatchRule) -> Result<Vec<usize>> {
    let mut out = match rule {
        MismatchRule::TopK(k) => {
            if k > p.len() {
                return Err(Error::invalid(format!("TopK({k}) exceeds n={}", p.len())));
            }
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            idx.truncate(k);
            idx
        }
        MismatchRule::Threshold(tau) => {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::invalid(format!("threshold {tau} outside [0, 1]")));
            }
            (0..p.len()).filter(|&i| p[i] <= tau).collect()
        }
    };
    out.sort_unstable();
    Ok(out)
}

/// Detect suspicious rows, then re-sort only those rows within their blocks.
pub fn two_stage_correct(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    rule: MismatchRule,
    blocks: Option<&BlockPartition>,
) -> Result<PermutationEstimate> {
    let n = y.len();
    let report = detect_mismatches(family, x, y, beta, rule)?;
    let eta = x * beta;
    let mut pi: Vec<usize> = (0..n).collect();
    match blocks {
        Some(b) => {
            if b.n() != n {
                return Err(Error::invalid("block partition does not match the number of rows"));
            }
            let mut per_block: Vec<Vec<usize>> = vec![Vec::new(); b.len()];
            for &i in &report.selected {
                per_block[b.block_of(i)].push(i);
            }
            for idx in per_block.iter().filter(|v| v.len() > 1) {
                pair_ranks(&eta, y, idx, &mut pi);
            }
        }
        None => pair_ranks(&eta, y, &report.selected, &mut pi),
    }
    Ok(PermutationEstimate::from_map(pi, y))
}
