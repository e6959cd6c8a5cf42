//! The interpretable layer: part templates, the argmax mask, the
//! mutual-information filter loss with its gradients, and running estimates
//! of the loss's partition terms.
//!
//! Likelihood components are indexed `0..n²` for the positive templates
//! (row-major location `row * n + col`) and `n²` for the negative template.
//!
//! The fitness of a map `x` to template `T` is the matrix trace
//! `tr(x·T) = Σ_ij x_ij·t_ji`. Because positive templates satisfy
//! `T_[a,b] = T_[b,a]ᵀ`, the component that responds most to a peak at
//! `[a, b]` is the template anchored at `[b, a]`; [`FitTarget::component`]
//! performs that conjugation so gradients stay aligned with the peak.

mod category;
mod decompose;
mod feature_map;
mod loss;
mod mask;
mod state;
mod templates;

pub use category::{assign_category, CategoryAccumulator};
pub use decompose::{decompose_loss, DecompositionReport};
pub use feature_map::{FeatureMap, Location};
pub use loss::{
    fitness_all, filter_loss_exact, filter_loss_grad_approx, filter_loss_surrogate, log_sum_exp,
    template_fitness, ExactLoss, FitTarget,
};
pub use mask::{apply_mask, mask_backward, MaskSelection};
pub use state::{update_state, FilterState, Phase, DEFAULT_DECAY};
pub use templates::{TemplateBank, TemplateParams};
