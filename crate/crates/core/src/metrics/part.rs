use super::cell_center;
use crate::error::{Error, Result};
use crate::interp::FeatureMap;
use crate::synth::SyntheticScene;

/// Smallest observed value `v` such that at most 0.5% of all entries are
/// strictly greater than `v`.
pub fn activation_threshold(maps: &[FeatureMap]) -> Result<f64> {
    let mut all: Vec<f64> = maps.iter().flat_map(|m| m.values().iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Empty("activation threshold map set"));
    }
    all.sort_by(f64::total_cmp);
    let total = all.len();
    // entries > v must satisfy greater / total <= 1/200
    let mut i = 0;
    while i < total {
        let v = all[i];
        let mut j = i;
        while j < total && all[j] == v {
            j += 1;
        }
        if (total - j) * 200 <= total {
            return Ok(v);
        }
        i = j;
    }
    Ok(all[total - 1])
}

/// Pixels covered by the round receptive fields of every cell above
/// `threshold`, as a row-major `height×width` bitmap.
pub fn valid_region(map: &FeatureMap, threshold: f64, height: usize, width: usize, rf_radius: f64) -> Vec<bool> {
    let n = map.n();
    let mut out = vec![false; height * width];
    let r2 = rf_radius * rf_radius;
    for i in 0..n {
        for j in 0..n {
            if map.get(i, j) <= threshold {
                continue;
            }
            let (cy, cx) = cell_center(i, j, n, height, width);
            for r in 0..height {
                let dy = r as f64 + 0.5 - cy;
                if dy * dy > r2 {
                    continue;
                }
                for c in 0..width {
                    let dx = c as f64 + 0.5 - cx;
                    if dy * dy + dx * dx <= r2 {
                        out[r * width + c] = true;
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartInterpretability {
    /// `max_k P_{f,k}`; 0 when no part is defined.
    pub p_f: f64,
    /// `(part id, P_{f,k})` for every part present in at least one image.
    pub per_part: Vec<(usize, f64)>,
    pub threshold: f64,
}

/// Fraction of images, per part, in which the filter's valid region overlaps
/// the part mask with IoU above 0.2.
pub fn part_interpretability(
    maps: &[FeatureMap],
    scenes: &[SyntheticScene],
    rf_radius: f64,
) -> Result<PartInterpretability> {
    if maps.len() != scenes.len() {
        return Err(Error::shape(
            "part_interpretability",
            format!("{} maps for {} scenes", maps.len(), scenes.len()),
        ));
    }
    if !(rf_radius > 0.0 && rf_radius.is_finite()) {
        return Err(Error::invalid(format!("receptive-field radius must be positive, got {rf_radius}")));
    }
    let threshold = activation_threshold(maps)?;
    let mut parts: Vec<usize> = scenes.iter().flat_map(|s| s.part_masks.iter().map(|m| m.part)).collect();
    parts.sort_unstable();
    parts.dedup();
    let mut hits = vec![0usize; parts.len()];
    let mut seen = vec![0usize; parts.len()];
    for (map, scene) in maps.iter().zip(scenes) {
        let region = valid_region(map, threshold, scene.size, scene.size, rf_radius);
        for mask in &scene.part_masks {
            let k = parts.binary_search(&mask.part).expect("part collected above");
            seen[k] += 1;
            let (mut inter, mut union) = (0usize, 0usize);
            for (&a, &b) in region.iter().zip(&mask.bits) {
                inter += usize::from(a && b);
                union += usize::from(a || b);
            }
            if union > 0 && inter as f64 / union as f64 > 0.2 {
                hits[k] += 1;
            }
        }
    }
    let per_part: Vec<(usize, f64)> = parts
        .iter()
        .zip(hits.iter().zip(&seen))
        .map(|(&p, (&h, &s))| (p, h as f64 / s as f64))
        .collect();
    let p_f = per_part.iter().map(|&(_, p)| p).fold(0.0, f64::max);
    Ok(PartInterpretability {
        p_f,
        per_part,
        threshold,
    })
}
