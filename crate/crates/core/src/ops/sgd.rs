use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Uniform initialization in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
pub fn init_uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-s..=s)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Classical momentum SGD: `v ← m·v + g`, `p ← p − lr·v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be non-negative, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    /// Applies one update. All gradients are validated before any parameter
    /// changes, so a rejected step leaves the model untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], names: &[String]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "sgd_step",
                format!("{} parameters but {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).map(String::as_str).unwrap_or("?");
            if p.shape() != g.shape() {
                return Err(Error::shape(
                    "sgd_step",
                    format!("parameter {name}: {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
            if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {name} at element {pos}")));
            }
        }
        if self.velocity.len() != params.len() {
            self.velocity = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = self.momentum * *vv + gv;
                *pv -= self.lr * *vv;
            }
        }
        Ok(())
    }
}
