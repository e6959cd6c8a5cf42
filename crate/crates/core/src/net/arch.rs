use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::TemplateParams;
use crate::ops::{conv_output_extent, TaskLossKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Pool {
        window: usize,
        stride: usize,
    },
    /// A conv layer whose post-ReLU maps carry the filter loss.
    InterpConv {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Mask,
    Fc {
        outputs: usize,
    },
}

/// Template hyper-parameters; `None` picks the size-dependent default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            tau: None,
            alpha: None,
            beta: 4.0,
        }
    }
}

impl TemplateConfig {
    pub fn resolve(&self, n: usize) -> TemplateParams {
        let d = TemplateParams::defaults(n);
        TemplateParams {
            n,
            tau: self.tau.unwrap_or(d.tau),
            beta: self.beta,
            alpha: self.alpha.unwrap_or(d.alpha),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    /// `[channels, height, width]` of the input image.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub num_categories: usize,
    pub loss: TaskLossKind,
    /// When false every mask layer acts as the identity.
    pub masks: bool,
    /// Divide mask-layer outputs by `τ`, so a masked cell never exceeds its
    /// raw value and the head sees activations on the raw scale.
    #[serde(default = "yes")]
    pub normalize_mask: bool,
    pub templates: TemplateConfig,
}

impl ArchitectureSpec {
    /// conv(8,3×3)–relu–pool2–conv(16,3×3)–relu–pool2–interp-conv(16,3×3)–relu–mask–fc
    /// on 32×32 grayscale, giving 6×6 interpretable maps.
    pub fn desk_default(num_categories: usize, loss: TaskLossKind) -> Self {
        Self {
            input: [1, 32, 32],
            layers: vec![
                LayerSpec::Conv {
                    filters: 8,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Pool { window: 2, stride: 2 },
                LayerSpec::Conv {
                    filters: 16,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Pool { window: 2, stride: 2 },
                LayerSpec::InterpConv {
                    filters: 16,
                    kernel: 3,
                    stride: 1,
                    pad: 0,
                },
                LayerSpec::Relu,
                LayerSpec::Mask,
                LayerSpec::Fc {
                    outputs: num_categories,
                },
            ],
            num_categories,
            loss,
            masks: true,
            normalize_mask: true,
            templates: TemplateConfig::default(),
        }
    }

    /// The default stack with a second interpretable layer on top of the first.
    pub fn desk_two_layer(num_categories: usize, loss: TaskLossKind) -> Self {
        let mut spec = Self::desk_default(num_categories, loss);
        let head = spec.layers.pop().expect("default has a head");
        spec.layers.extend([
            LayerSpec::InterpConv {
                filters: 16,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Mask,
            head,
        ]);
        spec
    }

    /// Output shape of every layer, validating the whole stack.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_categories == 0 {
            return Err(Error::invalid("architecture needs at least one category"));
        }
        if self.input.contains(&0) {
            return Err(Error::invalid("input extents must be positive"));
        }
        let mut shape = self.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |d: String| Error::invalid(format!("layer {i} ({layer:?}): {d}"));
            shape = match *layer {
                LayerSpec::Conv { filters, kernel, stride, pad } | LayerSpec::InterpConv { filters, kernel, stride, pad } => {
                    if shape.len() != 3 {
                        return Err(bad("convolution needs a [C, H, W] input".into()));
                    }
                    if filters == 0 {
                        return Err(bad("zero filters".into()));
                    }
                    let (Some(h), Some(w)) = (
                        conv_output_extent(shape[1], kernel, stride, pad),
                        conv_output_extent(shape[2], kernel, stride, pad),
                    ) else {
                        return Err(bad(format!("kernel does not fit input {shape:?}")));
                    };
                    vec![filters, h, w]
                }
                LayerSpec::Relu => shape,
                LayerSpec::Pool { window, stride } => {
                    if shape.len() != 3 || window == 0 || stride == 0 || window > shape[1] || window > shape[2] {
                        return Err(bad(format!("pool does not fit input {shape:?}")));
                    }
                    vec![shape[0], (shape[1] - window) / stride + 1, (shape[2] - window) / stride + 1]
                }
                LayerSpec::Mask => {
                    if shape.len() != 3 || shape[1] != shape[2] || shape[1] < 2 {
                        return Err(bad(format!("mask needs square maps of size >= 2, got {shape:?}")));
                    }
                    shape
                }
                LayerSpec::Fc { outputs } => {
                    if outputs == 0 {
                        return Err(bad("zero outputs".into()));
                    }
                    vec![outputs]
                }
            };
            out.push(shape.clone());
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::InterpConv { .. })
                && !(matches!(self.layers.get(i + 1), Some(LayerSpec::Relu))
                    && matches!(self.layers.get(i + 2), Some(LayerSpec::Mask)))
            {
                return Err(Error::invalid(format!(
                    "interpretable conv at layer {i} must be followed by relu then mask"
                )));
            }
            if matches!(layer, LayerSpec::Mask)
                && !(i >= 2 && matches!(self.layers[i - 2], LayerSpec::InterpConv { .. }))
            {
                return Err(Error::invalid(format!("mask at layer {i} must follow interp-conv and relu")));
            }
        }
        match self.layers.last() {
            Some(LayerSpec::Fc { outputs }) if *outputs == self.num_categories => {}
            _ => {
                return Err(Error::invalid(format!(
                    "the last layer must be fc with {} outputs",
                    self.num_categories
                )))
            }
        }
        Ok(out)
    }

    /// Indices of the mask layers, one per interpretable layer.
    pub fn mask_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Mask))
            .map(|(i, _)| i)
            .collect()
    }
}
