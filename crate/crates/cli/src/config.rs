//! Optional TOML run configuration. Every key is optional and any
//! command-line flag overrides the file.
//!
//! ```toml
//! [gen]
//! seed = 7
//! count = 1200
//!
//! [train]
//! epochs = 40
//! lambda_k = 1.0
//! loss = "softmax"
//!
//! [eval]
//! top_m = 100
//! ```

use std::path::Path;

use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub start: Option<usize>,
    pub categories: Option<usize>,
    pub jitter: Option<i32>,
    pub clutter: Option<usize>,
    pub negatives: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub lambda_k: Option<f64>,
    pub seed: Option<u64>,
    pub loss: Option<String>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub filter_loss: Option<bool>,
    pub mask: Option<bool>,
    pub interp_layers: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub layer: Option<usize>,
    pub top_m: Option<usize>,
    pub rf_radius: Option<f64>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, String> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
