use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::matching::BlockPartition;

/// Ground truth for a merged file: the correctly linked responses and the
/// linkage map, with `y[i] == y_star[pi_star[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub y_star: DVector<f64>,
    pub pi_star: Vec<usize>,
}

impl Truth {
    /// Fraction of records with `pi_star[i] != i`.
    pub fn mismatch_fraction(&self) -> f64 {
        let n = self.pi_star.len().max(1);
        self.pi_star.iter().enumerate().filter(|(i, &j)| *i != j).count() as f64 / n as f64
    }
}

/// A linked file: covariates `x` (n × d) and responses `y` that may be
/// attached to the wrong rows.
#[derive(Debug, Clone)]
pub struct MergedDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub truth: Option<Truth>,
    pub blocks: Option<BlockPartition>,
}

impl MergedDataset {
    pub fn new(family: &Family, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if d == 0 || n < d {
            return Err(Error::invalid(format!("need n >= d >= 1, got n={n}, d={d}")));
        }
        if y.len() != n {
            return Err(Error::invalid(format!("response has length {}, design has {n} rows", y.len())));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite design entry at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        if let Some(i) = y.iter().position(|&v| !family.in_support(v)) {
            return Err(Error::invalid(format!("response {} at row {i} is outside the support", y[i])));
        }
        Ok(MergedDataset { x, y, truth: None, blocks: None })
    }

    /// Attach ground truth; checks `y[i] == y_star[pi_star[i]]` exactly.
    pub fn with_truth(mut self, y_star: DVector<f64>, pi_star: Vec<usize>) -> Result<Self> {
        let n = self.n();
        if y_star.len() != n || pi_star.len() != n {
            return Err(Error::invalid("truth has the wrong length"));
        }
        if !is_permutation(&pi_star) {
            return Err(Error::invalid("pi_star is not a bijection"));
        }
        if let Some(i) = (0..n).find(|&i| self.y[i] != y_star[pi_star[i]]) {
            return Err(Error::invalid(format!("y[{i}] != y_star[pi_star[{i}]]")));
        }
        self.truth = Some(Truth { y_star, pi_star });
        Ok(self)
    }

    pub fn with_blocks(mut self, blocks: BlockPartition) -> Result<Self> {
        if blocks.n() != self.n() {
            return Err(Error::invalid("block partition does not match the number of rows"));
        }
        if let Some(t) = &self.truth {
            if !blocks.respects(&t.pi_star) {
                return Err(Error::invalid("pi_star moves indices across blocks"));
            }
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

pub(crate) fn is_permutation(pi: &[usize]) -> bool {
    let mut seen = vec![false; pi.len()];
    for &j in pi {
        if j >= pi.len() || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}
