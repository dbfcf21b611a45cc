//! Exponential-family regression when responses may be attached to the
//! wrong covariate rows.
//!
//! The main entry points are [`fit_penalized`] and
//! [`fit_penalized_constrained`], which give every observation an
//! ℓ1-penalized offset that absorbs the mean shift of a mismatched record.
//! [`baselines`] holds the estimating-equation competitors, [`matching`]
//! recovers the linkage itself, and [`simlab`] runs seeded experiments.

pub mod baselines;
pub mod error;
pub mod family;
pub mod estimators;
pub mod matching;
pub mod simlab;
mod linalg;

pub use error::{Error, Result};
pub use estimators::{
    fit_glm, fit_penalized, fit_penalized_constrained, GlmFit, GlmOptions, MergedDataset, PenalizedFit,
    PenalizedOptions,
};
pub use family::{Family, FamilyKind, Link};
pub use matching::{BlockPartition, PermutationEstimate};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/families.md")]
    mod families {}
    #[doc = include_str!("../../../book/src/penalized.md")]
    mod penalized {}
    #[doc = include_str!("../../../book/src/blocks.md")]
    mod blocks {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
