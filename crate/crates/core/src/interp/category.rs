use crate::error::{Error, Result};

/// `argmax_c` of the per-category mean summed activation; `None` entries are
/// categories without recorded maps. Ties go to the smallest index.
pub fn assign_category(means: &[Option<f64>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, m) in means.iter().enumerate() {
        if let Some(m) = *m {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((c, m));
            }
        }
    }
    best.map(|(c, _)| c)
        .ok_or(Error::Empty("category activation records"))
}

/// Running per-category sums of `Σ_ij x_ij` for one filter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryAccumulator {
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl CategoryAccumulator {
    pub fn new(categories: usize) -> Self {
        Self {
            sums: vec![0.0; categories],
            counts: vec![0; categories],
        }
    }

    pub fn record(&mut self, category: usize, total_activation: f64) {
        self.sums[category] += total_activation;
        self.counts[category] += 1;
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    pub fn assign(&self) -> Result<usize> {
        assign_category(&self.means())
    }

    pub fn clear(&mut self) {
        self.sums.fill(0.0);
        self.counts.fill(0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_largest() {
        assert_eq!(assign_category(&[Some(1.0), Some(5.0)]).unwrap(), 1);
    }

    #[test]
    fn ties_go_low() {
        assert_eq!(assign_category(&[Some(2.0), Some(2.0)]).unwrap(), 0);
    }

    #[test]
    fn skips_empty_and_rejects_all_empty() {
        assert_eq!(assign_category(&[None, Some(0.0)]).unwrap(), 1);
        assert!(assign_category(&[None, None]).is_err());
        assert!(CategoryAccumulator::new(3).assign().is_err());
    }
}
