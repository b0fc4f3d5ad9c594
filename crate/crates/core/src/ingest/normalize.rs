use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::CrimeTensor;
use crate::error::{Error, Result};

/// Per (category, region) min-max statistics fitted on a training slice.
/// Maps `min -> -1` and `max -> +1`; pairs with `max == min` are flagged
/// degenerate and map to a constant 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub categories: usize,
    pub regions: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl NormalizationSpec {
    /// Fits on the 0-based, half-open bin range `train_bins`.
    pub fn fit(crimes: &CrimeTensor, train_bins: Range<usize>) -> Result<Self> {
        if train_bins.is_empty() {
            return Err(Error::Fit("empty training slice".into()));
        }
        if train_bins.end > crimes.steps() {
            return Err(Error::Fit(format!(
                "training slice {train_bins:?} exceeds {} steps",
                crimes.steps()
            )));
        }
        let (k_n, n) = (crimes.categories.len(), crimes.regions);
        let mut min = Vec::with_capacity(k_n * n);
        let mut max = Vec::with_capacity(k_n * n);
        for k in 0..k_n {
            for i in 0..n {
                let slice = &crimes.series(k, i)[train_bins.clone()];
                min.push(slice.iter().copied().fold(f64::INFINITY, f64::min));
                max.push(slice.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
        }
        let degenerate = min.iter().zip(&max).map(|(a, b)| a == b).collect();
        Ok(Self {
            categories: k_n,
            regions: n,
            min,
            max,
            degenerate,
        })
    }

    #[inline]
    fn slot(&self, k: usize, i: usize) -> usize {
        k * self.regions + i
    }

    pub fn bounds(&self, k: usize, i: usize) -> (f64, f64) {
        let s = self.slot(k, i);
        (self.min[s], self.max[s])
    }

    pub fn is_degenerate(&self, k: usize, i: usize) -> bool {
        self.degenerate[self.slot(k, i)]
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }

    pub fn apply_value(&self, x: f64, k: usize, i: usize) -> f64 {
        let s = self.slot(k, i);
        if self.degenerate[s] {
            return 0.0;
        }
        2.0 * (x - self.min[s]) / (self.max[s] - self.min[s]) - 1.0
    }

    pub fn invert(&self, y: f64, k: usize, i: usize) -> f64 {
        let s = self.slot(k, i);
        if self.degenerate[s] {
            return self.min[s];
        }
        (y + 1.0) / 2.0 * (self.max[s] - self.min[s]) + self.min[s]
    }

    /// Normalized copy of the whole tensor (same layout).
    pub fn apply(&self, crimes: &CrimeTensor) -> Result<Vec<f64>> {
        if crimes.categories.len() != self.categories || crimes.regions != self.regions {
            return Err(Error::Shape(format!(
                "normalizer fitted for {}x{} applied to {}x{}",
                self.categories,
                self.regions,
                crimes.categories.len(),
                crimes.regions
            )));
        }
        let mut out = Vec::with_capacity(crimes.values.len());
        for k in 0..self.categories {
            for i in 0..self.regions {
                out.extend(crimes.series(k, i).iter().map(|&x| self.apply_value(x, k, i)));
            }
        }
        Ok(out)
    }

    /// Normalized `[region][bin]` plane of one category.
    pub fn apply_category(&self, crimes: &CrimeTensor, k: usize) -> Vec<f64> {
        (0..self.regions)
            .flat_map(|i| crimes.series(k, i).iter().map(move |&x| self.apply_value(x, k, i)))
            .collect()
    }
}
