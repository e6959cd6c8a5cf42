//! Interpretability metrics against ground-truth part masks and landmarks.
//!
//! A cell `[i, j]` of an `n×n` map over an `H×W` image sits at the image
//! point `((i + 0.5)·H/n, (j + 0.5)·W/n)`; pixel `(r, c)` sits at
//! `(r + 0.5, c + 0.5)`.

mod activation;
mod instability;
mod part;
mod purity;
mod report;

pub use activation::{activation_stats, single_filter_accuracy, ActivationStats, ThresholdAccuracy};
pub use instability::{baseline_instability, location_instability, Instability};
pub use part::{activation_threshold, part_interpretability, valid_region, PartInterpretability};
pub use purity::{semantic_purity, Purity};
pub use report::{evaluate, EvalOptions, FilterMetrics, MetricsReport, MetricsSummary};

/// Image-space center of cell `[row, col]` of an `n×n` map.
pub fn cell_center(row: usize, col: usize, n: usize, height: usize, width: usize) -> (f64, f64) {
    (
        (row as f64 + 0.5) * height as f64 / n as f64,
        (col as f64 + 0.5) * width as f64 / n as f64,
    )
}
