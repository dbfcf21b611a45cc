//! Naive GLM fits and the penalized offset estimators.

mod constrained;
mod dataset;
mod glm;
mod penalized;

pub use constrained::{fit_penalized_constrained, fit_penalized_constrained_from, sum_zero_soft_threshold};
pub use dataset::{MergedDataset, Truth};
pub(crate) use dataset::is_permutation;
pub use glm::{fit_glm, total_loss, GlmFit, GlmOptions};
pub use penalized::{
    beta_update, coordinate_objective, fit_penalized, fit_penalized_from, lambda_max, objective, smooth_gradient,
    smooth_loss, xi_update, PenalizedFit, PenalizedOptions, XiUpdate,
};
