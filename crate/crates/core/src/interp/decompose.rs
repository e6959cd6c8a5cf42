use super::feature_map::FeatureMap;
use super::loss::{fitness_all, log_sum_exp};
use super::templates::TemplateBank;
use crate::error::{Error, Result};

/// The filter loss split into a prior term and two conditional entropies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompositionReport {
    /// `−H(Ω)`, fixed by the prior.
    pub neg_h_omega: f64,
    /// `H(Ω'|X)` with `Ω' = {μ⁻, Ω⁺}`: part present vs. absent.
    pub h_cond_binary: f64,
    /// `Σ_x p(Ω⁺, x)·H(Ω⁺|X = x)`: spread over positive locations.
    pub weighted_spatial_entropy: f64,
    pub reconstructed_loss: f64,
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

pub fn decompose_loss(maps: &[FeatureMap], bank: &TemplateBank) -> Result<DecompositionReport> {
    if maps.is_empty() {
        return Err(Error::Empty("filter loss map set"));
    }
    let fits = maps
        .iter()
        .map(|x| fitness_all(x, bank))
        .collect::<Result<Vec<_>>>()?;
    let comps = bank.components();
    let neg = bank.negative_index();
    let log_prior = bank.log_prior();
    let neg_h_omega: f64 = bank.prior().iter().map(|&p| xlogx(p)).sum();

    let log_z: Vec<f64> = (0..comps)
        .map(|mu| log_sum_exp(&fits.iter().map(|f| f[mu]).collect::<Vec<_>>()))
        .collect();

    let mut h_binary = 0.0;
    let mut spatial = 0.0;
    for f in &fits {
        // log p(μ, x) = log p(μ) + log p(x|μ)
        let joint: Vec<f64> = (0..comps).map(|mu| log_prior[mu] + f[mu] - log_z[mu]).collect();
        let log_px = log_sum_exp(&joint);
        let px = log_px.exp();
        let post: Vec<f64> = joint.iter().map(|j| j - log_px).collect();
        let log_pos = log_sum_exp(&post[..neg]);
        let p_neg = post[neg].exp();
        let p_pos = log_pos.exp();
        h_binary -= px * (xlogx(p_neg) + xlogx(p_pos));
        let h_pos: f64 = -post[..neg].iter().map(|lp| xlogx((lp - log_pos).exp())).sum::<f64>();
        spatial += px * p_pos * h_pos;
    }
    Ok(DecompositionReport {
        neg_h_omega,
        h_cond_binary: h_binary,
        weighted_spatial_entropy: spatial,
        reconstructed_loss: neg_h_omega + h_binary + spatial,
    })
}
