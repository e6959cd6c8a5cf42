use super::feature_map::FeatureMap;
use super::loss::{fitness_all, log_sum_exp, FitTarget};
use super::templates::TemplateBank;
use crate::error::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.99;

/// Training phase that decides how a map's gradient target is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// No target category yet: every map is fitted to its activation peak.
    WarmUp,
    /// Maps of the target category fit their peak, all others fit `μ⁻`.
    Supervised,
}

/// Per-filter running estimates of `Z_μ` and `p(x)`, plus the assigned
/// target category.
///
/// Both estimates are exponential moving averages kept in the log domain and
/// seeded with the first observed sample. `Z_μ` tracks the mean of
/// `exp[tr(x·T_μ)]`; `p(x)` tracks the mean of the per-map mixture
/// `Σ_μ p(μ)·exp[tr(x·T_μ)]/Z_μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    log_z: Vec<f64>,
    log_px: f64,
    target_category: Option<usize>,
    update_count: u64,
    decay: f64,
}

impl FilterState {
    pub fn new(bank: &TemplateBank) -> Self {
        Self::with_decay(bank, DEFAULT_DECAY).expect("default decay is valid")
    }

    pub fn with_decay(bank: &TemplateBank, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::invalid(format!("decay must lie in [0, 1), got {decay}")));
        }
        Ok(Self {
            log_z: vec![0.0; bank.components()],
            log_px: 0.0,
            target_category: None,
            update_count: 0,
            decay,
        })
    }

    /// Rebuilds a state from serialized parts.
    pub fn from_parts(
        log_z: Vec<f64>,
        log_px: f64,
        target_category: Option<usize>,
        update_count: u64,
        decay: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::invalid(format!("decay must lie in [0, 1), got {decay}")));
        }
        Ok(Self {
            log_z,
            log_px,
            target_category,
            update_count,
            decay,
        })
    }

    pub fn log_z(&self) -> &[f64] {
        &self.log_z
    }

    pub fn z_estimates(&self) -> Vec<f64> {
        self.log_z.iter().map(|v| v.exp()).collect()
    }

    pub fn log_px(&self) -> f64 {
        self.log_px
    }

    pub fn px_estimate(&self) -> f64 {
        self.log_px.exp()
    }

    pub fn target_category(&self) -> Option<usize> {
        self.target_category
    }

    pub fn set_target_category(&mut self, category: Option<usize>) {
        self.target_category = category;
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Absorbs one map into the running estimates.
    pub fn absorb(&mut self, x: &FeatureMap, bank: &TemplateBank) -> Result<()> {
        let fits = fitness_all(x, bank)?;
        self.absorb_fitness(&fits, bank)
    }

    /// Same as [`absorb`](Self::absorb) with precomputed component fitness.
    pub fn absorb_fitness(&mut self, fits: &[f64], bank: &TemplateBank) -> Result<()> {
        if fits.len() != self.log_z.len() {
            return Err(Error::shape(
                "FilterState::absorb",
                format!("{} fitness values for {} components", fits.len(), self.log_z.len()),
            ));
        }
        let first = self.update_count == 0;
        let keep = self.decay.ln();
        let take = (1.0 - self.decay).ln();
        for (z, &t) in self.log_z.iter_mut().zip(fits) {
            *z = if first { t } else { log_add_exp(keep + *z, take + t) };
        }
        let mix: Vec<f64> = fits
            .iter()
            .zip(&self.log_z)
            .zip(bank.log_prior())
            .map(|((t, z), p)| p + t - z)
            .collect();
        let sample = log_sum_exp(&mix);
        self.log_px = if first {
            sample
        } else {
            log_add_exp(keep + self.log_px, take + sample)
        };
        self.update_count += 1;
        Ok(())
    }

    /// Chooses the gradient target for a map of an image with `category`.
    pub fn target_for(&self, x: &FeatureMap, category: Option<usize>, phase: Phase) -> Result<FitTarget> {
        match phase {
            Phase::WarmUp => Ok(FitTarget::Peak(x.argmax())),
            Phase::Supervised => {
                let Some(target) = self.target_category else {
                    return Err(Error::invalid(
                        "filter has no target category but supervised gradients were requested",
                    ));
                };
                if category == Some(target) {
                    Ok(FitTarget::Peak(x.argmax()))
                } else {
                    Ok(FitTarget::Negative)
                }
            }
        }
    }
}

/// Functional form of [`FilterState::absorb`].
pub fn update_state(state: &FilterState, x: &FeatureMap, bank: &TemplateBank) -> Result<FilterState> {
    let mut next = state.clone();
    next.absorb(x, bank)?;
    Ok(next)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
