use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `[row, col]` cell position, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub row: usize,
    pub col: usize,
}

impl Location {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn transposed(self) -> Self {
        Self {
            row: self.col,
            col: self.row,
        }
    }

    pub fn l1(self, other: Location) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

/// Post-ReLU activations of one filter on one image: an `n×n` grid of
/// non-negative values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    n: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("feature maps need n >= 2, got {n}")));
        }
        if values.len() != n * n {
            return Err(Error::shape(
                "FeatureMap::new",
                format!("{} values for a {n}x{n} map", values.len()),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "feature map entry {pos} = {} is not a finite non-negative value",
                values[pos]
            )));
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 2, "feature maps need n >= 2");
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n + col]
    }

    /// First row-major position of the maximum value.
    pub fn argmax(&self) -> Location {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        Location::new(best / self.n, best % self.n)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.n, self.values.iter().map(|v| v * factor).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_small() {
        assert!(FeatureMap::new(2, vec![0.0, -1.0, 0.0, 0.0]).is_err());
        assert!(FeatureMap::new(1, vec![0.0]).is_err());
        assert!(FeatureMap::new(2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn argmax_ties_to_first() {
        let x = FeatureMap::new(2, vec![1.0, 3.0, 3.0, 0.0]).unwrap();
        assert_eq!(x.argmax(), Location::new(0, 1));
        assert_eq!(FeatureMap::zeros(3).argmax(), Location::new(0, 0));
    }
}
