use nalgebra::{DMatrix, DVector};

use super::BlockPartition;
use crate::error::{Error, Result};

/// A within-block linkage map. `pi_hat[i] = j` says the response in row `i`
/// is attributed to unit `j`; `corrected_y[pi_hat[i]] = y[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationEstimate {
    pub pi_hat: Vec<usize>,
    pub hamming: f64,
    pub corrected_y: DVector<f64>,
}

impl PermutationEstimate {
    pub(crate) fn from_map(pi_hat: Vec<usize>, y: &DVector<f64>) -> Self {
        let mut corrected_y = DVector::zeros(y.len());
        for (i, &j) in pi_hat.iter().enumerate() {
            corrected_y[j] = y[i];
        }
        let hamming = hamming_to_identity(&pi_hat);
        PermutationEstimate { pi_hat, hamming, corrected_y }
    }

    pub fn identity(y: &DVector<f64>) -> Self {
        Self::from_map((0..y.len()).collect(), y)
    }
}

/// Sort by pairing order statistics of `x β` and `y` within each block.
///
/// Without `blocks` the whole sample is one block.
pub fn recover_permutation(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    blocks: Option<&BlockPartition>,
) -> Result<PermutationEstimate> {
    if x.ncols() != beta.len() {
        return Err(Error::invalid("coefficient length does not match design"));
    }
    recover_permutation_scores(&(x * beta), y, blocks)
}

/// As [`recover_permutation`] with precomputed scores; only their order matters.
pub fn recover_permutation_scores(
    scores: &DVector<f64>,
    y: &DVector<f64>,
    blocks: Option<&BlockPartition>,
) -> Result<PermutationEstimate> {
    let n = y.len();
    if scores.len() != n {
        return Err(Error::invalid("score and response lengths differ"));
    }
    let mut pi: Vec<usize> = (0..n).collect();
    match blocks {
        Some(b) => {
            if b.n() != n {
                return Err(Error::invalid("block partition does not match the number of rows"));
            }
            for g in b.groups() {
                pair_ranks(scores, y, g, &mut pi);
            }
        }
        None => pair_ranks(scores, y, &(0..n).collect::<Vec<_>>(), &mut pi),
    }
    Ok(PermutationEstimate::from_map(pi, y))
}

/// Assign the r-th smallest response in `idx` to the unit with the r-th smallest score.
pub(crate) fn pair_ranks(scores: &DVector<f64>, y: &DVector<f64>, idx: &[usize], pi: &mut [usize]) {
    let mut by_y = idx.to_vec();
    let mut by_s = idx.to_vec();
    by_y.sort_unstable();
    by_s.sort_unstable();
    by_y.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    by_s.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    for (&i, &j) in by_y.iter().zip(&by_s) {
        pi[i] = j;
    }
}

fn hamming_to_identity(pi: &[usize]) -> f64 {
    if pi.is_empty() {
        return 0.0;
    }
    pi.iter().enumerate().filter(|(i, &j)| *i != j).count() as f64 / pi.len() as f64
}

/// Fraction of positions where two index maps disagree.
pub fn hamming_distance(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "index maps of different length");
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

/// `‖ŷ − y*‖₂`.
pub fn correspondence_l2(y_hat: &DVector<f64>, y_star: &DVector<f64>) -> f64 {
    (y_hat - y_star).norm()
}
