use crate::error::{Error, Result};
use crate::tensor::{expect_rank, Tensor};

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Output extent of a convolution along one axis, or `None` when the kernel
/// does not fit into the padded input.
pub fn conv_output_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > size + 2 * pad {
        return None;
    }
    Some((size + 2 * pad - kernel) / stride + 1)
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn check(input: &Tensor, weights: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        const OP: &str = "conv2d";
        expect_rank(OP, input, 3)?;
        expect_rank(OP, weights, 4)?;
        let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (c_out, wc, kh, kw) = (
            weights.shape()[0],
            weights.shape()[1],
            weights.shape()[2],
            weights.shape()[3],
        );
        if wc != c_in {
            return Err(Error::shape(
                OP,
                format!("input has {c_in} channels but weights expect {wc}"),
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        let (Some(oh), Some(ow)) = (
            conv_output_extent(h, kh, stride, pad),
            conv_output_extent(w, kw, stride, pad),
        ) else {
            return Err(Error::shape(
                OP,
                format!("kernel {kh}x{kw} exceeds padded input {h}x{w} (pad {pad})"),
            ));
        };
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            oh,
            ow,
            stride,
            pad,
        })
    }

    /// Input row for output row `o` and kernel offset `k`, if inside the image.
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Range of output columns whose source column `ox*stride + kx - pad` is in bounds.
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if kx >= self.pad {
            0
        } else {
            (self.pad - kx).div_ceil(s)
        };
        // largest ox with ox*s + kx - pad <= w - 1
        let limit = self.w + self.pad;
        let hi = if kx + 1 > limit {
            0
        } else {
            ((limit - kx - 1) / s + 1).min(self.ow)
        };
        (lo.min(hi), hi)
    }
}

/// Cross-correlation of a `[C_in, H, W]` input with `[C_out, C_in, kH, kW]` weights.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = Geometry::check(input, weights, stride, pad)?;
    if bias.shape() != [g.c_out] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?}, expected [{}]", bias.shape(), g.c_out),
        ));
    }
    let x = input.data();
    let wt = weights.data();
    let plane = g.oh * g.ow;
    let mut out = vec![0.0; g.c_out * plane];
    for oc in 0..g.c_out {
        let dst = &mut out[oc * plane..(oc + 1) * plane];
        dst.fill(bias.data()[oc]);
        for ic in 0..g.c_in {
            let src = &x[ic * g.h * g.w..(ic + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = wt[((oc * g.c_in + ic) * g.kh + ky) * g.kw + kx];
                    let (lo, hi) = g.col_range(kx);
                    for oy in 0..g.oh {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        let row = &src[iy * g.w..(iy + 1) * g.w];
                        let orow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                        if g.stride == 1 {
                            let base = lo + kx - g.pad;
                            for (o, i) in orow[lo..hi].iter_mut().zip(&row[base..base + hi - lo]) {
                                *o += wv * i;
                            }
                        } else {
                            for ox in lo..hi {
                                orow[ox] += wv * row[ox * g.stride + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.c_out, g.oh, g.ow], out))
}

/// Exact gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads> {
    let g = Geometry::check(input, weights, stride, pad)?;
    if grad_out.shape() != [g.c_out, g.oh, g.ow] {
        return Err(Error::shape(
            "conv2d_backward",
            format!(
                "grad_out shape {:?}, expected [{}, {}, {}]",
                grad_out.shape(),
                g.c_out,
                g.oh,
                g.ow
            ),
        ));
    }
    let x = input.data();
    let wt = weights.data();
    let go = grad_out.data();
    let plane = g.oh * g.ow;
    let mut gi = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; g.c_out];
    for oc in 0..g.c_out {
        let gplane = &go[oc * plane..(oc + 1) * plane];
        gb[oc] = gplane.iter().sum();
        for ic in 0..g.c_in {
            let src = &x[ic * g.h * g.w..(ic + 1) * g.h * g.w];
            let gsrc = &mut gi[ic * g.h * g.w..(ic + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let widx = ((oc * g.c_in + ic) * g.kh + ky) * g.kw + kx;
                    let wv = wt[widx];
                    let (lo, hi) = g.col_range(kx);
                    let mut acc = 0.0;
                    for oy in 0..g.oh {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        let grow = &gplane[oy * g.ow..(oy + 1) * g.ow];
                        if g.stride == 1 {
                            let base = lo + kx - g.pad;
                            let n = hi - lo;
                            let row = &src[iy * g.w + base..iy * g.w + base + n];
                            let grow = &grow[lo..hi];
                            for (r, gv) in row.iter().zip(grow) {
                                acc += r * gv;
                            }
                            let gdst = &mut gsrc[iy * g.w + base..iy * g.w + base + n];
                            for (d, gv) in gdst.iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        } else {
                            for ox in lo..hi {
                                let ix = ox * g.stride + kx - g.pad;
                                acc += src[iy * g.w + ix] * grow[ox];
                                gsrc[iy * g.w + ix] += wv * grow[ox];
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_parts(input.shape().to_vec(), gi),
        weights: Tensor::from_parts(weights.shape().to_vec(), gw),
        bias: Tensor::from_parts(vec![g.c_out], gb),
    })
}
