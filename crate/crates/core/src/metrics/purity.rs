use crate::error::{Error, Result};
use crate::interp::{FeatureMap, Location, TemplateBank};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Purity {
    pub value: f64,
    /// True when no activation was seen at all and the ratio was taken as 1.
    pub vacuous: bool,
}

/// Share of positive activation mass inside the positive region of each
/// map's selected template, pooled over all maps.
pub fn semantic_purity(maps: &[FeatureMap], selections: &[Location], bank: &TemplateBank) -> Result<Purity> {
    if maps.len() != selections.len() {
        return Err(Error::shape(
            "semantic_purity",
            format!("{} maps for {} selections", maps.len(), selections.len()),
        ));
    }
    let (mut inside, mut total) = (0.0, 0.0);
    for (m, &mu) in maps.iter().zip(selections) {
        if m.n() != bank.n() || mu.row >= bank.n() || mu.col >= bank.n() {
            return Err(Error::shape(
                "semantic_purity",
                format!("map of size {} or selection {mu:?} does not fit templates of size {}", m.n(), bank.n()),
            ));
        }
        for (&v, &t) in m.values().iter().zip(bank.positive(mu)) {
            let v = v.max(0.0);
            total += v;
            if t > 0.0 {
                inside += v;
            }
        }
    }
    if total == 0.0 {
        return Ok(Purity {
            value: 1.0,
            vacuous: true,
        });
    }
    Ok(Purity {
        value: inside / total,
        vacuous: false,
    })
}
