use serde::{Deserialize, Serialize};

use super::feature_map::Location;
use crate::error::{Error, Result};

/// Scalar parameters that determine a [`TemplateBank`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateParams {
    pub n: usize,
    pub tau: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl TemplateParams {
    /// `τ = 0.5/n²`, `α = n²/(1+n²)`, `β = 4`.
    pub fn defaults(n: usize) -> Self {
        let n2 = (n * n) as f64;
        Self {
            n,
            tau: 0.5 / n2,
            beta: 4.0,
            alpha: n2 / (1.0 + n2),
        }
    }
}

/// The `n²` positive part templates, the negative template and the location
/// prior. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateBank {
    params: TemplateParams,
    /// `n²` templates of `n²` entries each, row-major.
    positives: Vec<f64>,
    prior: Vec<f64>,
    log_prior: Vec<f64>,
}

impl TemplateBank {
    pub fn build(n: usize, tau: f64, beta: f64, alpha: f64) -> Result<Self> {
        Self::from_params(TemplateParams { n, tau, beta, alpha })
    }

    pub fn from_params(params: TemplateParams) -> Result<Self> {
        let TemplateParams { n, tau, beta, alpha } = params;
        if n < 2 {
            return Err(Error::invalid(format!("template size n must be >= 2, got {n}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let cells = n * n;
        let mut positives = Vec::with_capacity(cells * cells);
        for mu in 0..cells {
            let anchor = Location::new(mu / n, mu % n);
            for cell in 0..cells {
                let d = anchor.l1(Location::new(cell / n, cell % n)) as f64;
                positives.push(tau * (1.0 - beta * d / n as f64).max(-1.0));
            }
        }
        let mut prior = vec![alpha / cells as f64; cells];
        prior.push(1.0 - alpha);
        let log_prior = prior.iter().map(|p| p.ln()).collect();
        Ok(Self {
            params,
            positives,
            prior,
            log_prior,
        })
    }

    pub fn params(&self) -> TemplateParams {
        self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn tau(&self) -> f64 {
        self.params.tau
    }

    /// Number of likelihood components: `n²` positive plus one negative.
    pub fn components(&self) -> usize {
        self.params.n * self.params.n + 1
    }

    pub fn negative_index(&self) -> usize {
        self.params.n * self.params.n
    }

    /// Entries of the positive template anchored at `mu`.
    pub fn positive(&self, mu: Location) -> &[f64] {
        let cells = self.params.n * self.params.n;
        let idx = mu.row * self.params.n + mu.col;
        &self.positives[idx * cells..(idx + 1) * cells]
    }

    /// Value every cell of the negative template takes.
    pub fn negative_value(&self) -> f64 {
        -self.params.tau
    }

    /// Entry `[row, col]` of component `k`.
    pub fn entry(&self, k: usize, row: usize, col: usize) -> f64 {
        let n = self.params.n;
        if k == self.negative_index() {
            -self.params.tau
        } else {
            self.positives[k * n * n + row * n + col]
        }
    }

    /// Full entry grid of component `k` (materialized for the negative one).
    pub fn component(&self, k: usize) -> Vec<f64> {
        let cells = self.params.n * self.params.n;
        if k == self.negative_index() {
            vec![-self.params.tau; cells]
        } else {
            self.positives[k * cells..(k + 1) * cells].to_vec()
        }
    }

    /// Flat positive-template storage, `n²·n²` values.
    pub fn positives_raw(&self) -> &[f64] {
        &self.positives
    }

    /// `p(μ)` for every component, negative last.
    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Total prior mass, summed with error compensation.
    pub fn prior_mass(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &p in &self.prior {
            let t = sum + p;
            comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
            sum = t;
        }
        sum + comp
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }
}
