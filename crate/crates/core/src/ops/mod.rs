//! Hand-derived forward/backward kernels for the small convnet host.
//!
//! Every kernel works on a single example; batching is a loop in the caller
//! with index-ordered gradient reduction.

mod conv;
mod fc;
mod loss;
mod pool;
mod relu;
mod sgd;

pub use conv::{conv2d_backward, conv2d_forward, conv_output_extent, ConvGrads};
pub use fc::{fc_backward, fc_forward, FcGrads};
pub use loss::{predict_scores, task_loss, Label, TaskLossKind};
pub use pool::{maxpool_backward, maxpool_forward, PoolOutput};
pub use relu::{relu_backward, relu_forward};
pub use sgd::{init_uniform, Sgd};
