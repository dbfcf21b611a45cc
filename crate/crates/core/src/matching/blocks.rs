use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint groups `G_1..G_K` covering `{0..n-1}`. A linkage permutation
/// respecting the partition only moves indices within a group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    groups: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl BlockPartition {
    /// Validate and build from explicit groups. Indices inside each group are sorted.
    pub fn from_groups(n: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut membership = vec![usize::MAX; n];
        let mut groups = groups;
        for (j, g) in groups.iter_mut().enumerate() {
            if g.is_empty() {
                return Err(Error::invalid(format!("block {j} is empty")));
            }
            g.sort_unstable();
            for &i in g.iter() {
                if i >= n {
                    return Err(Error::invalid(format!("block {j} contains index {i} >= n={n}")));
                }
                if membership[i] != usize::MAX {
                    return Err(Error::invalid(format!("index {i} appears in more than one block")));
                }
                membership[i] = j;
            }
        }
        if let Some(i) = membership.iter().position(|&m| m == usize::MAX) {
            return Err(Error::invalid(format!("index {i} is not covered by any block")));
        }
        Ok(BlockPartition { groups, membership })
    }

    /// One block holding every index.
    pub fn single(n: usize) -> Self {
        BlockPartition { groups: vec![(0..n).collect()], membership: vec![0; n] }
    }

    /// Every index in its own block.
    pub fn singletons(n: usize) -> Self {
        BlockPartition { groups: (0..n).map(|i| vec![i]).collect(), membership: (0..n).collect() }
    }

    /// Consecutive blocks of `size` (the last one possibly shorter).
    pub fn contiguous(n: usize, size: usize) -> Self {
        let size = size.max(1);
        let groups: Vec<Vec<usize>> =
            (0..n).collect::<Vec<_>>().chunks(size).map(|c| c.to_vec()).collect();
        let membership = (0..n).map(|i| i / size).collect();
        BlockPartition { groups, membership }
    }

    /// Equivalence classes of equal keys, ordered by first appearance.
    pub fn from_keys<K: Eq + Hash>(keys: &[K]) -> Self {
        let mut index: HashMap<&K, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut membership = Vec::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            let j = *index.entry(k).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[j].push(i);
            membership.push(j);
        }
        BlockPartition { groups, membership }
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    /// Number of blocks `K`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.membership[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn singleton_count(&self) -> usize {
        self.groups.iter().filter(|g| g.len() == 1).count()
    }

    /// Whether the index map `pi` moves indices only within blocks.
    pub fn respects(&self, pi: &[usize]) -> bool {
        pi.len() == self.n() && pi.iter().enumerate().all(|(i, &j)| j < self.n() && self.membership[i] == self.membership[j])
    }

    /// The `K × n` constraint matrix `C` with `C[j, i] = 1` iff `i ∈ G_j`.
    pub fn constraint_matrix(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.len(), self.n());
        for (j, g) in self.groups.iter().enumerate() {
            for &i in g {
                c[(j, i)] = 1.0;
            }
        }
        c
    }

    /// Restrict to the sub-collection of indices `keep` (in the given order),
    /// renumbered `0..keep.len()`. Blocks left empty are dropped.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let keys: Vec<usize> = keep.iter().map(|&i| self.membership[i]).collect();
        BlockPartition::from_keys(&keys)
    }
}
