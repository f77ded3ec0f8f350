use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::Universe;

/// A multiset of `n >= 1` universe rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset<'u> {
    #[serde(skip)]
    universe: &'u Universe,
    indices: Vec<usize>,
}

impl<'u> Dataset<'u> {
    pub fn new(universe: &'u Universe, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("dataset", "must contain at least one element"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= universe.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: universe.len(),
            });
        }
        Ok(Self { universe, indices })
    }

    pub fn universe(&self) -> &'u Universe {
        self.universe
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    /// `(1/n) Σ x`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.universe.dim()];
        for &i in &self.indices {
            for (o, v) in out.iter_mut().zip(self.universe.point(i)) {
                *o += v;
            }
        }
        let n = self.n() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// The dataset `{ x ↦ level[map[x]] }` over another universe.
    pub fn induced<'v>(&self, level: &'v Universe, map: &[usize]) -> Result<Dataset<'v>> {
        if map.len() != self.universe.len() {
            return Err(Error::DimensionMismatch {
                expected: self.universe.len(),
                got: map.len(),
            });
        }
        Dataset::new(level, self.indices.iter().map(|&i| map[i]).collect())
    }
}
