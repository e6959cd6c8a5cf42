use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Passes `grad_out` where `x > 0`; the derivative at exactly zero is 0.
pub fn relu_backward(grad_out: &Tensor, x: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != x.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?} vs {:?}", grad_out.shape(), x.shape()),
        ));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}
