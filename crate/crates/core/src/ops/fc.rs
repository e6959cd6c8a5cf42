use crate::error::{Error, Result};
use crate::tensor::{expect_rank, Tensor};

#[derive(Clone, Debug)]
pub struct FcGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check(op: &'static str, input: &Tensor, weights: &Tensor) -> Result<(usize, usize)> {
    expect_rank(op, weights, 2)?;
    let (out, inp) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != inp {
        return Err(Error::shape(
            op,
            format!("input has {} values, weights expect {inp}", input.len()),
        ));
    }
    Ok((out, inp))
}

/// `W·x + b` for a flattened input of any shape.
pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (out, inp) = check("fc", input, weights)?;
    if bias.shape() != [out] {
        return Err(Error::shape("fc", format!("bias shape {:?}, expected [{out}]", bias.shape())));
    }
    let x = input.data();
    let y = (0..out)
        .map(|o| {
            let row = &weights.data()[o * inp..(o + 1) * inp];
            bias.data()[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect();
    Ok(Tensor::from_parts(vec![out], y))
}

pub fn fc_backward(grad_out: &Tensor, input: &Tensor, weights: &Tensor) -> Result<FcGrads> {
    let (out, inp) = check("fc_backward", input, weights)?;
    if grad_out.len() != out {
        return Err(Error::shape(
            "fc_backward",
            format!("grad_out has {} values, expected {out}", grad_out.len()),
        ));
    }
    let x = input.data();
    let mut gi = vec![0.0; inp];
    let mut gw = vec![0.0; out * inp];
    for (o, &g) in grad_out.data().iter().enumerate() {
        let row = &weights.data()[o * inp..(o + 1) * inp];
        for (d, w) in gi.iter_mut().zip(row) {
            *d += w * g;
        }
        for (d, v) in gw[o * inp..(o + 1) * inp].iter_mut().zip(x) {
            *d = g * v;
        }
    }
    Ok(FcGrads {
        input: Tensor::from_parts(input.shape().to_vec(), gi),
        weights: Tensor::from_parts(vec![out, inp], gw),
        bias: Tensor::from_parts(vec![out], grad_out.data().to_vec()),
    })
}
