use crate::error::{Error, Result};
use crate::interp::FeatureMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationStats {
    /// Mean peak over images of the target category.
    pub target: Option<f64>,
    /// Mean peak over all other images, negatives included.
    pub other: Option<f64>,
}

/// Mean map peak on target-category images versus the rest.
pub fn activation_stats(maps: &[FeatureMap], categories: &[Option<usize>], target: usize) -> Result<ActivationStats> {
    if maps.len() != categories.len() {
        return Err(Error::shape(
            "activation_stats",
            format!("{} maps for {} labels", maps.len(), categories.len()),
        ));
    }
    let (mut ts, mut tn, mut os, mut on) = (0.0, 0usize, 0.0, 0usize);
    for (m, &c) in maps.iter().zip(categories) {
        if c == Some(target) {
            ts += m.peak();
            tn += 1;
        } else {
            os += m.peak();
            on += 1;
        }
    }
    Ok(ActivationStats {
        target: (tn > 0).then(|| ts / tn as f64),
        other: (on > 0).then(|| os / on as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdAccuracy {
    pub accuracy: f64,
    /// Images whose peak exceeds this value are called positive. `-∞`
    /// stands for "everything positive".
    pub threshold: f64,
}

/// Best accuracy of the rule `peak > threshold ⇒ positive` over every
/// observed peak as threshold (plus `-∞`). Ties keep the smallest threshold.
pub fn single_filter_accuracy(peaks: &[f64], positive: &[bool]) -> Result<ThresholdAccuracy> {
    if peaks.len() != positive.len() {
        return Err(Error::shape(
            "single_filter_accuracy",
            format!("{} peaks for {} labels", peaks.len(), positive.len()),
        ));
    }
    if !positive.iter().any(|&p| p) || positive.iter().all(|&p| p) {
        return Err(Error::invalid("single-filter accuracy needs both classes"));
    }
    let mut idx: Vec<usize> = (0..peaks.len()).collect();
    idx.sort_by(|&a, &b| peaks[a].total_cmp(&peaks[b]));
    let n = peaks.len();
    // threshold -inf: everything positive
    let mut correct = positive.iter().filter(|&&p| p).count();
    let mut best = ThresholdAccuracy {
        accuracy: correct as f64 / n as f64,
        threshold: f64::NEG_INFINITY,
    };
    let mut i = 0;
    while i < n {
        let v = peaks[idx[i]];
        while i < n && peaks[idx[i]] == v {
            correct = if positive[idx[i]] { correct - 1 } else { correct + 1 };
            i += 1;
        }
        let acc = correct as f64 / n as f64;
        if acc > best.accuracy {
            best = ThresholdAccuracy { accuracy: acc, threshold: v };
        }
    }
    Ok(best)
}
