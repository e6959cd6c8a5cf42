use super::feature_map::{FeatureMap, Location};
use super::templates::TemplateBank;
use crate::error::{Error, Result};

/// Output of the mask layer for one map.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSelection {
    pub mu_hat: Location,
    pub masked: FeatureMap,
}

fn check(x: &FeatureMap, bank: &TemplateBank) -> Result<()> {
    if x.n() != bank.n() {
        return Err(Error::shape(
            "apply_mask",
            format!("map is {0}x{0} but templates are {1}x{1}", x.n(), bank.n()),
        ));
    }
    Ok(())
}

/// `max(x ∘ T_μ̂, 0)` with `μ̂` the activation argmax. Only positive templates
/// are candidates, for every image in both training and inference.
pub fn apply_mask(x: &FeatureMap, bank: &TemplateBank) -> Result<MaskSelection> {
    check(x, bank)?;
    let mu_hat = x.argmax();
    let t = bank.positive(mu_hat);
    let masked = x.values().iter().zip(t).map(|(v, t)| (v * t).max(0.0)).collect();
    Ok(MaskSelection {
        mu_hat,
        masked: FeatureMap::new(x.n(), masked)?,
    })
}

/// Routes `grad_masked` back to the raw map, holding `μ̂` fixed:
/// `∂masked_ij/∂x_ij = t_ij` where the output is positive, 0 elsewhere.
pub fn mask_backward(
    grad_masked: &[f64],
    x: &FeatureMap,
    mu_hat: Location,
    bank: &TemplateBank,
) -> Result<Vec<f64>> {
    check(x, bank)?;
    if grad_masked.len() != x.values().len() {
        return Err(Error::shape(
            "mask_backward",
            format!("{} gradients for {} cells", grad_masked.len(), x.values().len()),
        ));
    }
    let t = bank.positive(mu_hat);
    Ok(grad_masked
        .iter()
        .zip(x.values())
        .zip(t)
        .map(|((g, v), t)| if v * t > 0.0 { g * t } else { 0.0 })
        .collect())
}
