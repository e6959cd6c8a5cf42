//! Interpretable convolutional networks at desk scale.
//!
//! The crate hosts a small deterministic convnet ([`ops`], [`net`]) whose top
//! layer can be made interpretable ([`interp`]): every filter is pushed
//! towards a single activation peak on one object part of one category. A
//! synthetic scene generator ([`synth`]) provides exact part ground truth for
//! the interpretability metrics ([`metrics`]).

pub mod checkpoint;
pub mod error;
pub mod interp;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod pnm;
pub mod synth;
pub mod tensor;
pub mod verify;
pub mod viz;

pub use error::{Error, Result};
pub use tensor::Tensor;
