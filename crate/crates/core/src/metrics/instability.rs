use super::cell_center;
use crate::error::{Error, Result};
use crate::interp::FeatureMap;
use crate::synth::SyntheticScene;

#[derive(Clone, Debug, PartialEq)]
pub struct Instability {
    /// Mean of `D_{f,k}` over usable landmarks; `None` if none were usable.
    pub mean: Option<f64>,
    /// `(part id, D_{f,k})` per usable landmark.
    pub per_landmark: Vec<(usize, f64)>,
    /// Landmarks seen in fewer than two selected images.
    pub excluded: Vec<usize>,
}

/// Standard deviation (population convention) of the diagonal-normalized
/// distance between each landmark and the projected activation peak, over
/// the `top_m` images with the highest `scores`.
///
/// Ties in score keep the earlier image.
pub fn location_instability(
    maps: &[FeatureMap],
    scores: &[f64],
    scenes: &[SyntheticScene],
    top_m: usize,
) -> Result<Instability> {
    if maps.len() != scenes.len() || scores.len() != scenes.len() {
        return Err(Error::shape(
            "location_instability",
            format!("{} maps, {} scores, {} scenes", maps.len(), scores.len(), scenes.len()),
        ));
    }
    let mut order: Vec<usize> = (0..maps.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(top_m);
    let mut dists: Vec<(usize, Vec<f64>)> = Vec::new();
    for &i in &order {
        let (map, scene) = (&maps[i], &scenes[i]);
        let size = scene.size as f64;
        let diag = (2.0 * size * size).sqrt();
        let mu = map.argmax();
        let (py, px) = cell_center(mu.row, mu.col, map.n(), scene.size, scene.size);
        for lm in &scene.landmarks {
            let d = ((lm.row as f64 + 0.5 - py).powi(2) + (lm.col as f64 + 0.5 - px).powi(2)).sqrt() / diag;
            match dists.iter_mut().find(|(p, _)| *p == lm.part) {
                Some((_, v)) => v.push(d),
                None => dists.push((lm.part, vec![d])),
            }
        }
    }
    dists.sort_by_key(|(p, _)| *p);
    let mut per_landmark = Vec::new();
    let mut excluded = Vec::new();
    for (part, d) in dists {
        if d.len() < 2 {
            excluded.push(part);
            continue;
        }
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        per_landmark.push((part, var.sqrt()));
    }
    let mean = (!per_landmark.is_empty())
        .then(|| per_landmark.iter().map(|&(_, d)| d).sum::<f64>() / per_landmark.len() as f64);
    Ok(Instability {
        mean,
        per_landmark,
        excluded,
    })
}

/// Instability of a filter with no target category: the smallest
/// per-category value, each computed over that category's images only.
/// Returns the value and the category achieving it.
pub fn baseline_instability(
    maps: &[FeatureMap],
    scenes: &[SyntheticScene],
    top_m: usize,
) -> Result<Option<(usize, f64)>> {
    if maps.len() != scenes.len() {
        return Err(Error::shape(
            "baseline_instability",
            format!("{} maps for {} scenes", maps.len(), scenes.len()),
        ));
    }
    let mut cats: Vec<usize> = scenes.iter().filter_map(|s| s.category).collect();
    cats.sort_unstable();
    cats.dedup();
    let mut best: Option<(usize, f64)> = None;
    for c in cats {
        let (m, s) = category_subset(maps, scenes, c);
        let scores: Vec<f64> = m.iter().map(FeatureMap::peak).collect();
        if let Some(v) = location_instability(&m, &scores, &s, top_m)?.mean {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((c, v));
            }
        }
    }
    Ok(best)
}

pub(crate) fn category_subset(
    maps: &[FeatureMap],
    scenes: &[SyntheticScene],
    category: usize,
) -> (Vec<FeatureMap>, Vec<SyntheticScene>) {
    maps.iter()
        .zip(scenes)
        .filter(|(_, s)| s.category == Some(category))
        .map(|(m, s)| (m.clone(), s.clone()))
        .unzip()
}
