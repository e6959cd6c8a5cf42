use serde::{Deserialize, Serialize};

use super::{
    activation_stats, baseline_instability, location_instability, part_interpretability, semantic_purity,
};
use crate::error::{Error, Result};
use crate::interp::{FeatureMap, Location};
use crate::net::{is_correct, record, Network};
use crate::ops::Label;
use crate::synth::SyntheticScene;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Which interpretable layer to evaluate, counting from the input.
    pub layer: usize,
    pub top_m: usize,
    /// Round receptive-field radius in pixels; `None` means `H / (2n)`.
    pub rf_radius: Option<f64>,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            layer: 0,
            top_m: 100,
            rf_radius: None,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterMetrics {
    pub filter: usize,
    pub target_category: Option<usize>,
    pub part_interpretability: f64,
    pub part_probabilities: Vec<(usize, f64)>,
    pub instability: Option<f64>,
    pub purity: f64,
    pub purity_vacuous: bool,
    pub mean_target_act: Option<f64>,
    pub mean_other_act: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub part_interpretability: f64,
    pub instability: Option<f64>,
    /// Pooled over every filter and image.
    pub purity: f64,
    pub mean_target_act: Option<f64>,
    pub mean_other_act: Option<f64>,
    pub accuracy: Option<f64>,
    pub images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub options: EvalOptions,
    pub rf_radius: f64,
    /// `target-category` or `min-over-categories`.
    pub instability_convention: String,
    pub filters: Vec<FilterMetrics>,
    pub summary: MetricsSummary,
    pub warnings: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in vals {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl MetricsReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# variance: population; top-m score: peak activation (zero peaks skipped); ");
        out.push_str(&format!(
            "top_m {}; rf radius {:.6}; instability {}\n",
            self.options.top_m, self.rf_radius, self.instability_convention
        ));
        out.push_str("filter\ttarget_category\tP_f\tinstability\tpurity\tmean_target_act\tmean_other_act\n");
        for f in &self.filters {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{}\t{:.6}\t{}\t{}\n",
                f.filter,
                f.target_category.map_or_else(|| "-".to_string(), |c| c.to_string()),
                f.part_interpretability,
                opt(f.instability),
                f.purity,
                opt(f.mean_target_act),
                opt(f.mean_other_act),
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "# summary\tP_f {:.6}\tinstability {}\tpurity {:.6}\tmean_target_act {}\tmean_other_act {}\taccuracy {}\timages {}\n",
            s.part_interpretability,
            opt(s.instability),
            s.purity,
            opt(s.mean_target_act),
            opt(s.mean_other_act),
            opt(s.accuracy),
            s.images
        ));
        for w in &self.warnings {
            out.push_str(&format!("# warning: {w}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Runs every metric for each filter of one interpretable layer over `scenes`.
///
/// Masked networks score instability on their target category; unmasked
/// ones, or filters without a category, use the best category.
pub fn evaluate(net: &Network, scenes: &[SyntheticScene], options: EvalOptions) -> Result<MetricsReport> {
    if scenes.is_empty() {
        return Err(Error::Empty("evaluation scenes"));
    }
    let layer = net.interp.get(options.layer).ok_or_else(|| {
        Error::invalid(format!(
            "interpretable layer {} requested, network has {}",
            options.layer,
            net.interp.len()
        ))
    })?;
    let [_, h, w] = net.spec().input;
    if scenes.iter().any(|s| s.size != h || s.size != w) {
        return Err(Error::shape("evaluate", format!("scenes do not match the {h}x{w} network input")));
    }
    let n = layer.bank.n();
    let rf_radius = options.rf_radius.unwrap_or(h as f64 / (2.0 * n as f64));
    let images: Vec<_> = scenes.iter().map(SyntheticScene::image).collect();
    let traces = record(net, &images, options.threads)?;
    let kind = net.spec().loss;
    let labelled: Vec<bool> = scenes
        .iter()
        .zip(&traces)
        .filter_map(|(s, t)| {
            let label = match s.category {
                Some(c) if c < net.spec().num_categories => Label::Category(c),
                Some(_) => return None,
                None => Label::Negative,
            };
            Some(is_correct(t.logits.data(), label, kind))
        })
        .collect();
    let accuracy = mean(labelled.iter().map(|&h| if h { 1.0 } else { 0.0 }));
    let categories: Vec<Option<usize>> = scenes.iter().map(|s| s.category).collect();
    let masked = net.spec().masks;
    let mut warnings = Vec::new();
    let mut filters = Vec::with_capacity(layer.states.len());
    let mut all_maps = Vec::new();
    let mut all_sel = Vec::new();
    for (f, state) in layer.states.iter().enumerate() {
        let maps: Vec<FeatureMap> = traces.iter().map(|t| t.maps[options.layer][f].clone()).collect();
        let sel: Vec<Location> = traces.iter().map(|t| t.selections[options.layer][f].mu_hat).collect();
        let part = part_interpretability(&maps, scenes, rf_radius)?;
        let target = state.target_category();
        let live: Vec<usize> = (0..maps.len()).filter(|&i| maps[i].peak() > 0.0).collect();
        let instability = match target {
            Some(c) if masked => {
                let idx: Vec<usize> = live.iter().copied().filter(|&i| scenes[i].category == Some(c)).collect();
                let m: Vec<FeatureMap> = idx.iter().map(|&i| maps[i].clone()).collect();
                let s: Vec<SyntheticScene> = idx.iter().map(|&i| scenes[i].clone()).collect();
                let scores: Vec<f64> = m.iter().map(FeatureMap::peak).collect();
                let r = location_instability(&m, &scores, &s, options.top_m)?;
                if !r.excluded.is_empty() {
                    warnings.push(format!("filter {f}: landmarks {:?} had fewer than 2 images", r.excluded));
                }
                r.mean
            }
            _ => {
                let m: Vec<FeatureMap> = live.iter().map(|&i| maps[i].clone()).collect();
                let s: Vec<SyntheticScene> = live.iter().map(|&i| scenes[i].clone()).collect();
                baseline_instability(&m, &s, options.top_m)?.map(|(_, v)| v)
            }
        };
        if instability.is_none() {
            warnings.push(format!("filter {f}: no landmark had 2 usable images; instability undefined"));
        }
        let purity = semantic_purity(&maps, &sel, &layer.bank)?;
        if purity.vacuous {
            warnings.push(format!("filter {f}: no activation; purity taken as 1"));
        }
        let stats = match target {
            Some(c) => activation_stats(&maps, &categories, c)?,
            None => super::ActivationStats {
                target: None,
                other: None,
            },
        };
        filters.push(FilterMetrics {
            filter: f,
            target_category: target,
            part_interpretability: part.p_f,
            part_probabilities: part.per_part,
            instability,
            purity: purity.value,
            purity_vacuous: purity.vacuous,
            mean_target_act: stats.target,
            mean_other_act: stats.other,
        });
        all_maps.extend(maps);
        all_sel.extend(sel);
    }
    let pooled = semantic_purity(&all_maps, &all_sel, &layer.bank)?;
    let summary = MetricsSummary {
        part_interpretability: mean(filters.iter().map(|f| f.part_interpretability)).unwrap_or(0.0),
        instability: mean(filters.iter().filter_map(|f| f.instability)),
        purity: pooled.value,
        mean_target_act: mean(filters.iter().filter_map(|f| f.mean_target_act)),
        mean_other_act: mean(filters.iter().filter_map(|f| f.mean_other_act)),
        accuracy,
        images: scenes.len(),
    };
    Ok(MetricsReport {
        options,
        rf_radius,
        instability_convention: if masked { "target-category" } else { "min-over-categories" }.to_string(),
        filters,
        summary,
        warnings,
    })
}
