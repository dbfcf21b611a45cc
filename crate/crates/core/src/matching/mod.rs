//! Block structure, permutation recovery by sorting, and mismatch detection.

mod blocks;
mod mismatch;
mod permutation;

pub use blocks::BlockPartition;
pub use mismatch::{detect_mismatches, two_stage_correct, MismatchReport, MismatchRule};
pub use permutation::{
    correspondence_l2, hamming_distance, recover_permutation, recover_permutation_scores, PermutationEstimate,
};
