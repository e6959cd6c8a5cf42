use super::feature_map::{FeatureMap, Location};
use super::state::FilterState;
use super::templates::TemplateBank;
use crate::error::{Error, Result};

/// `log Σ exp(v)` with the maximum factored out.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Unnormalized log-likelihood `tr(x·T) = Σ_ij x_ij·t_ji` of `x` under the
/// template entries `t` (row-major `n×n`).
pub fn template_fitness(x: &FeatureMap, t: &[f64]) -> Result<f64> {
    let n = x.n();
    if t.len() != n * n {
        return Err(Error::shape(
            "template_fitness",
            format!("template has {} entries, map is {n}x{n}", t.len()),
        ));
    }
    Ok(trace(x.values(), t, n))
}

fn trace(x: &[f64], t: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += x[i * n + j] * t[j * n + i];
        }
    }
    acc
}

fn check_size(op: &'static str, x: &FeatureMap, bank: &TemplateBank) -> Result<()> {
    if x.n() != bank.n() {
        return Err(Error::shape(
            op,
            format!("map is {0}x{0} but templates are {1}x{1}", x.n(), bank.n()),
        ));
    }
    Ok(())
}

/// Fitness of `x` under every component, negative last.
pub fn fitness_all(x: &FeatureMap, bank: &TemplateBank) -> Result<Vec<f64>> {
    check_size("fitness_all", x, bank)?;
    let n = bank.n();
    let cells = n * n;
    let raw = bank.positives_raw();
    let mut out: Vec<f64> = (0..cells)
        .map(|k| trace(x.values(), &raw[k * cells..(k + 1) * cells], n))
        .collect();
    out.push(-bank.tau() * x.total());
    Ok(out)
}

/// Which likelihood component a map's gradient is taken against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitTarget {
    /// The part is present with its activation peak at this cell.
    Peak(Location),
    /// The part is absent (`μ⁻`).
    Negative,
}

impl FitTarget {
    /// Component index whose trace response peaks at the target cell.
    pub fn component(self, bank: &TemplateBank) -> usize {
        match self {
            FitTarget::Peak(loc) => {
                let t = loc.transposed();
                t.row * bank.n() + t.col
            }
            FitTarget::Negative => bank.negative_index(),
        }
    }
}

/// Adds `w · ∂tr(x·T_k)/∂x` into `grad`; the derivative is `T_kᵀ`.
fn add_component_grad(grad: &mut [f64], w: f64, k: usize, bank: &TemplateBank) {
    let n = bank.n();
    if k == bank.negative_index() {
        let v = w * bank.negative_value();
        grad.iter_mut().for_each(|g| *g += v);
    } else {
        let t = &bank.positives_raw()[k * n * n..(k + 1) * n * n];
        for i in 0..n {
            for j in 0..n {
                grad[i * n + j] += w * t[j * n + i];
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExactLoss {
    pub loss: f64,
    /// One gradient grid per input map, taken with the partition terms frozen.
    pub gradients: Vec<Vec<f64>>,
    /// `log Z_μ` over the input set for every component.
    pub log_z: Vec<f64>,
}

/// Negative mutual information between a set of maps and the part
/// locations, with `Z_μ = Σ_{x∈X} exp[tr(x·T_μ)]` computed over the set.
pub fn filter_loss_exact(maps: &[FeatureMap], bank: &TemplateBank) -> Result<ExactLoss> {
    if maps.is_empty() {
        return Err(Error::Empty("filter loss map set"));
    }
    let fits = maps
        .iter()
        .map(|x| fitness_all(x, bank))
        .collect::<Result<Vec<_>>>()?;
    let comps = bank.components();
    let log_z: Vec<f64> = (0..comps)
        .map(|mu| log_sum_exp(&fits.iter().map(|f| f[mu]).collect::<Vec<_>>()))
        .collect();
    let (loss, gradients) = loss_and_grads(&fits, bank, &log_z);
    Ok(ExactLoss {
        loss,
        gradients,
        log_z,
    })
}

/// The filter loss with the partition terms fixed to `log_z`. Equals
/// [`filter_loss_exact`] when `log_z` comes from the same set; its
/// derivative is what the exact gradients report.
pub fn filter_loss_surrogate(maps: &[FeatureMap], bank: &TemplateBank, log_z: &[f64]) -> Result<f64> {
    if maps.is_empty() {
        return Err(Error::Empty("filter loss map set"));
    }
    if log_z.len() != bank.components() {
        return Err(Error::shape(
            "filter_loss_surrogate",
            format!("{} partition terms for {} components", log_z.len(), bank.components()),
        ));
    }
    let fits = maps
        .iter()
        .map(|x| fitness_all(x, bank))
        .collect::<Result<Vec<_>>>()?;
    Ok(loss_and_grads(&fits, bank, log_z).0)
}

fn loss_and_grads(fits: &[Vec<f64>], bank: &TemplateBank, log_z: &[f64]) -> (f64, Vec<Vec<f64>>) {
    let prior = bank.prior();
    let log_prior = bank.log_prior();
    let cells = bank.n() * bank.n();
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(fits.len());
    for f in fits {
        let log_q: Vec<f64> = f.iter().zip(log_z).map(|(t, z)| t - z).collect();
        let joint: Vec<f64> = log_q.iter().zip(log_prior).map(|(q, p)| q + p).collect();
        let log_px = log_sum_exp(&joint);
        let mut g = vec![0.0; cells];
        for (mu, &lq) in log_q.iter().enumerate() {
            let w = prior[mu] * lq.exp() * (lq - log_px);
            loss -= w;
            add_component_grad(&mut g, -w, mu, bank);
        }
        grads.push(g);
    }
    (loss, grads)
}

/// Single-component gradient of the filter loss for one map, using the
/// running `Z` and `p(x)` estimates held in `state`:
/// `−p(μ̂)·e^{tr − log Z_μ̂}·(tr − log Z_μ̂ − log p(x))·∂tr/∂x`.
///
/// For [`FitTarget::Peak`] the returned grid is proportional to the entries
/// of the template anchored at the peak.
pub fn filter_loss_grad_approx(
    x: &FeatureMap,
    target: FitTarget,
    state: &FilterState,
    bank: &TemplateBank,
) -> Result<Vec<f64>> {
    check_size("filter_loss_grad_approx", x, bank)?;
    if state.update_count() == 0 {
        return Err(Error::invalid(
            "filter state has no partition estimates yet; absorb at least one map first",
        ));
    }
    if state.log_z().len() != bank.components() {
        return Err(Error::shape(
            "filter_loss_grad_approx",
            format!("state tracks {} components, bank has {}", state.log_z().len(), bank.components()),
        ));
    }
    let k = target.component(bank);
    let tr = template_fitness(x, &bank.component(k))?;
    let log_q = tr - state.log_z()[k];
    let w = bank.prior()[k] * log_q.exp() * (log_q - state.log_px());
    let mut g = vec![0.0; x.n() * x.n()];
    add_component_grad(&mut g, -w, k, bank);
    Ok(g)
}
