//! A small convnet hosting interpretable layers, and its training loop.

mod arch;
mod model;
mod train;

pub use arch::{ArchitectureSpec, LayerSpec, TemplateConfig};
pub use model::{ForwardTrace, InterpLayer, Network};
pub use train::{accuracy, is_correct, record, train, train_with, EpochLog, Sample, StepMetrics, TrainConfig, Trainer};
