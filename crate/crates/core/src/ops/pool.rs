use crate::error::{Error, Result};
use crate::tensor::{expect_rank, Tensor};

#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub output: Tensor,
    /// Flat index into the input tensor of each output element's maximum.
    pub argmax: Vec<usize>,
}

/// Max-pooling without padding over a `[C, H, W]` input. Ties go to the
/// smallest row-major index inside the window.
pub fn maxpool_forward(x: &Tensor, window: usize, stride: usize) -> Result<PoolOutput> {
    expect_rank("maxpool", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if window == 0 || stride == 0 {
        return Err(Error::invalid("maxpool window and stride must be positive"));
    }
    if window > h || window > w {
        return Err(Error::shape(
            "maxpool",
            format!("window {window} exceeds spatial extent {h}x{w}"),
        ));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let data = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = data[best_idx];
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_parts(vec![c, oh, ow], out),
        argmax,
    })
}

pub fn maxpool_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(
            "maxpool_backward",
            format!("{} gradients for {} recorded indices", grad_out.len(), argmax.len()),
        ));
    }
    let len: usize = input_shape.iter().product();
    let mut gi = vec![0.0; len];
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        if idx >= len {
            return Err(Error::shape(
                "maxpool_backward",
                format!("index {idx} outside input of {len} elements"),
            ));
        }
        gi[idx] += g;
    }
    Ok(Tensor::from_parts(input_shape.to_vec(), gi))
}
