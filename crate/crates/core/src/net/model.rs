use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchitectureSpec, LayerSpec};
use crate::error::{Error, Result};
use crate::interp::{apply_mask, mask_backward, FeatureMap, FilterState, MaskSelection, TemplateBank};
use crate::ops::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, init_uniform, maxpool_backward, maxpool_forward,
    predict_scores, relu_backward, relu_forward,
};
use crate::tensor::Tensor;

/// Per-interpretable-layer machinery: its template bank and one running
/// state per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpLayer {
    /// Index of the mask layer in the stack.
    pub mask_layer: usize,
    pub bank: TemplateBank,
    pub states: Vec<FilterState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: ArchitectureSpec,
    shapes: Vec<Vec<usize>>,
    /// Weight and bias for every conv / interp-conv / fc layer, in stack order.
    params: Vec<Tensor>,
    names: Vec<String>,
    /// First parameter index of each layer, if it has parameters.
    param_slot: Vec<Option<usize>>,
    pub interp: Vec<InterpLayer>,
    seed: u64,
}

/// What one forward pass records for one image.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input of every layer, in stack order.
    pub inputs: Vec<Tensor>,
    pub logits: Tensor,
    pool_argmax: Vec<Option<Vec<usize>>>,
    /// Raw post-ReLU maps per interpretable layer, per filter.
    pub maps: Vec<Vec<FeatureMap>>,
    /// Mask selections per interpretable layer, per filter.
    pub selections: Vec<Vec<MaskSelection>>,
}

impl Network {
    pub fn new(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut names = Vec::new();
        let mut param_slot = Vec::with_capacity(spec.layers.len());
        let mut interp = Vec::new();
        let mut prev = spec.input.to_vec();
        for (i, layer) in spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { filters, kernel, .. } | LayerSpec::InterpConv { filters, kernel, .. } => {
                    let tag = if matches!(layer, LayerSpec::Conv { .. }) { "conv" } else { "interp" };
                    let c_in = prev[0];
                    param_slot.push(Some(params.len()));
                    params.push(init_uniform(
                        &mut rng,
                        &[filters, c_in, kernel, kernel],
                        c_in * kernel * kernel,
                        filters * kernel * kernel,
                    ));
                    params.push(Tensor::zeros(&[filters]));
                    names.push(format!("l{i}.{tag}.weight"));
                    names.push(format!("l{i}.{tag}.bias"));
                }
                LayerSpec::Fc { outputs } => {
                    let d: usize = prev.iter().product();
                    param_slot.push(Some(params.len()));
                    params.push(init_uniform(&mut rng, &[outputs, d], d, outputs));
                    params.push(Tensor::zeros(&[outputs]));
                    names.push(format!("l{i}.fc.weight"));
                    names.push(format!("l{i}.fc.bias"));
                }
                LayerSpec::Mask => {
                    param_slot.push(None);
                    let n = prev[1];
                    let bank = TemplateBank::from_params(spec.templates.resolve(n))?;
                    let states = (0..prev[0]).map(|_| FilterState::new(&bank)).collect();
                    interp.push(InterpLayer {
                        mask_layer: i,
                        bank,
                        states,
                    });
                }
                LayerSpec::Relu | LayerSpec::Pool { .. } => param_slot.push(None),
            }
            prev = shapes[i].clone();
        }
        Ok(Self {
            spec,
            shapes,
            params,
            names,
            param_slot,
            interp,
            seed,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    /// Output shape of the first interpretable layer's maps, `[M, n, n]`.
    pub fn interp_shape(&self, layer: usize) -> Option<&[usize]> {
        self.interp.get(layer).map(|l| self.shapes[l.mask_layer].as_slice())
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(
                "Network::set_params",
                format!("{} tensors for {} parameters", params.len(), self.params.len()),
            ));
        }
        for (i, (new, old)) in params.iter().zip(&self.params).enumerate() {
            if new.shape() != old.shape() {
                return Err(Error::shape(
                    "Network::set_params",
                    format!("{}: {:?} vs {:?}", self.names[i], new.shape(), old.shape()),
                ));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Factor applied to the mask output of interpretable layer `layer`.
    pub fn mask_gain(&self, layer: usize) -> f64 {
        if self.spec.normalize_mask {
            1.0 / self.interp[layer].bank.tau()
        } else {
            1.0
        }
    }

    pub fn forward_one(&self, image: &Tensor) -> Result<ForwardTrace> {
        if image.shape() != self.spec.input {
            return Err(Error::shape(
                "forward",
                format!("image shape {:?}, network expects {:?}", image.shape(), self.spec.input),
            ));
        }
        let layers = &self.spec.layers;
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pool_argmax = Vec::with_capacity(layers.len());
        let mut maps = Vec::with_capacity(self.interp.len());
        let mut selections = Vec::with_capacity(self.interp.len());
        let mut x = image.clone();
        let mut interp_idx = 0;
        for (i, layer) in layers.iter().enumerate() {
            let mut argmax = None;
            let y = match *layer {
                LayerSpec::Conv { stride, pad, .. } | LayerSpec::InterpConv { stride, pad, .. } => {
                    let p = self.param_slot[i].expect("conv has params");
                    conv2d_forward(&x, &self.params[p], &self.params[p + 1], stride, pad)?
                }
                LayerSpec::Relu => relu_forward(&x),
                LayerSpec::Pool { window, stride } => {
                    let out = maxpool_forward(&x, window, stride)?;
                    argmax = Some(out.argmax);
                    out.output
                }
                LayerSpec::Mask => {
                    let bank = &self.interp[interp_idx].bank;
                    let gain = self.mask_gain(interp_idx);
                    interp_idx += 1;
                    if !x.is_finite() {
                        return Err(Error::Diverged(format!("non-finite activations entering mask layer {i}")));
                    }
                    let (m, n) = (x.shape()[0], x.shape()[1]);
                    let mut raw = Vec::with_capacity(m);
                    let mut sel = Vec::with_capacity(m);
                    let mut out = Vec::with_capacity(x.len());
                    for f in 0..m {
                        let fm = FeatureMap::new(n, x.data()[f * n * n..(f + 1) * n * n].to_vec())?;
                        let s = apply_mask(&fm, bank)?;
                        if self.spec.masks {
                            out.extend(s.masked.values().iter().map(|v| v * gain));
                        } else {
                            out.extend_from_slice(fm.values());
                        }
                        raw.push(fm);
                        sel.push(s);
                    }
                    maps.push(raw);
                    selections.push(sel);
                    Tensor::from_parts(x.shape().to_vec(), out)
                }
                LayerSpec::Fc { .. } => {
                    let p = self.param_slot[i].expect("fc has params");
                    fc_forward(&x, &self.params[p], &self.params[p + 1])?
                }
            };
            pool_argmax.push(argmax);
            inputs.push(std::mem::replace(&mut x, y));
        }
        if !x.is_finite() {
            return Err(Error::Diverged("non-finite logits in forward pass".into()));
        }
        Ok(ForwardTrace {
            inputs,
            logits: x,
            pool_argmax,
            maps,
            selections,
        })
    }

    /// Parameter gradients for one image given `dL/dlogits` and extra
    /// gradients injected at the raw maps of each interpretable layer
    /// (`[M·n·n]` per layer, or `None`).
    pub fn backward_one(
        &self,
        trace: &ForwardTrace,
        grad_logits: &[f64],
        map_grads: &[Option<Vec<f64>>],
    ) -> Result<Vec<Tensor>> {
        let layers = &self.spec.layers;
        if grad_logits.len() != trace.logits.len() {
            return Err(Error::shape(
                "backward",
                format!("{} logit gradients for {} logits", grad_logits.len(), trace.logits.len()),
            ));
        }
        let mut grads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut g = Tensor::from_parts(trace.logits.shape().to_vec(), grad_logits.to_vec());
        let mut interp_idx = self.interp.len();
        for i in (0..layers.len()).rev() {
            let input = &trace.inputs[i];
            g = match layers[i] {
                LayerSpec::Conv { stride, pad, .. } | LayerSpec::InterpConv { stride, pad, .. } => {
                    let p = self.param_slot[i].expect("conv has params");
                    let cg = conv2d_backward(&g, input, &self.params[p], stride, pad)?;
                    grads[p] = cg.weights;
                    grads[p + 1] = cg.bias;
                    if i == 0 {
                        break;
                    }
                    cg.input
                }
                LayerSpec::Relu => relu_backward(&g, input)?,
                LayerSpec::Pool { .. } => {
                    let argmax = trace.pool_argmax[i].as_ref().expect("pool records argmax");
                    maxpool_backward(&g, argmax, input.shape())?
                }
                LayerSpec::Mask => {
                    interp_idx -= 1;
                    let l = &self.interp[interp_idx];
                    let (m, n) = (input.shape()[0], input.shape()[1]);
                    let cells = n * n;
                    let mut out = if self.spec.masks {
                        let gain = self.mask_gain(interp_idx);
                        let scaled: Vec<f64> = g.data().iter().map(|v| v * gain).collect();
                        let mut out = Vec::with_capacity(input.len());
                        for f in 0..m {
                            let sel = &trace.selections[interp_idx][f];
                            out.extend(mask_backward(
                                &scaled[f * cells..(f + 1) * cells],
                                &trace.maps[interp_idx][f],
                                sel.mu_hat,
                                &l.bank,
                            )?);
                        }
                        out
                    } else {
                        g.into_data()
                    };
                    if let Some(extra) = map_grads.get(interp_idx).and_then(Option::as_ref) {
                        if extra.len() != out.len() {
                            return Err(Error::shape(
                                "backward",
                                format!("{} map gradients for {} cells", extra.len(), out.len()),
                            ));
                        }
                        for (o, e) in out.iter_mut().zip(extra) {
                            *o += e;
                        }
                    }
                    Tensor::from_parts(input.shape().to_vec(), out)
                }
                LayerSpec::Fc { .. } => {
                    let p = self.param_slot[i].expect("fc has params");
                    let fg = fc_backward(&g, input, &self.params[p])?;
                    grads[p] = fg.weights;
                    grads[p + 1] = fg.bias;
                    fg.input
                }
            };
        }
        Ok(grads)
    }

    /// Category scores without recording: softmax probabilities, or
    /// independent per-category sigmoid scores for the logistic kind.
    pub fn predict(&self, image: &Tensor) -> Result<Vec<f64>> {
        let trace = self.forward_one(image)?;
        Ok(predict_scores(trace.logits.data(), self.spec.loss))
    }
}
