use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Metric used for separation numbers. `NormalizedL2` divides the Euclidean
/// distance by `sqrt(m)` so that scales are comparable to the average error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    NormalizedL2,
    LInf,
}

impl MetricKind {
    pub fn norm(self) -> Norm {
        match self {
            MetricKind::NormalizedL2 => Norm::L2,
            MetricKind::LInf => Norm::LInf,
        }
    }

    /// The factor turning a raw norm distance into this metric.
    pub fn scale(self, m: usize) -> f64 {
        match self {
            MetricKind::NormalizedL2 => (m as f64).sqrt(),
            MetricKind::LInf => 1.0,
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.norm().distance(a, b) / self.scale(a.len())
    }
}

/// Plain (unnormalized) norm on R^m.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    LInf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Norm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::LInf => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs())),
        }
    }
}

/// A finite point set in R^m, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    m: usize,
    points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    in_unit_cube: bool,
}

impl Universe {
    pub fn new(m: usize, points: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidUniverse("dimension must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidUniverse("universe must contain a point".into()));
        }
        if !points.len().is_multiple_of(m) {
            return Err(Error::InvalidUniverse(format!(
                "{} coordinates do not split into rows of length {m}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidUniverse(format!(
                "non-finite coordinate in row {}",
                bad / m
            )));
        }
        let in_unit_cube = points.iter().all(|&x| (0.0..=1.0).contains(&x));
        Ok(Self {
            m,
            points,
            labels: None,
            in_unit_cube,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::InvalidUniverse("universe must contain a point".into()))?;
        let mut points = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != m {
                return Err(Error::InvalidUniverse(format!(
                    "row {i} has {} coordinates, expected {m}",
                    row.len()
                )));
            }
            points.extend_from_slice(row);
        }
        Self::new(m, points)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(invalid(
                "labels",
                format!("{} labels for {} points", labels.len(), self.len()),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.m
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Whether every coordinate lies in `[0, 1]`.
    pub fn in_unit_cube(&self) -> bool {
        self.in_unit_cube
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.m..(i + 1) * self.m]
    }

    pub fn try_point(&self, i: usize) -> Result<&[f64]> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(self.point(i))
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.m)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    /// Sub-universe made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Universe> {
        let mut points = Vec::with_capacity(indices.len() * self.m);
        for &i in indices {
            points.extend_from_slice(self.try_point(i)?);
        }
        let mut sub = Universe::new(self.m, points)?;
        if let Some(labels) = &self.labels {
            sub.labels = Some(indices.iter().map(|&i| labels[i].clone()).collect());
        }
        Ok(sub)
    }

    /// Largest norm of any point.
    pub fn max_norm(&self, norm: Norm) -> f64 {
        self.rows().map(|r| norm.of(r)).fold(0.0, f64::max)
    }

    /// Per-coordinate `(min, max)` over all points.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); self.m];
        for row in self.rows() {
            for (b, &x) in bbox.iter_mut().zip(row) {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        bbox
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.m];
        for row in self.rows() {
            for (ci, x) in c.iter_mut().zip(row) {
                *ci += x;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|x| *x /= n);
        c
    }

    /// Adds `shift` to every point.
    pub fn translated(&self, shift: &[f64]) -> Result<Universe> {
        if shift.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: shift.len(),
            });
        }
        let points = self
            .rows()
            .flat_map(|r| r.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Universe::new(self.m, points)
    }
}

pub fn pairwise_distance(u: &Universe, i: usize, j: usize, metric: MetricKind) -> Result<f64> {
    Ok(metric.distance(u.try_point(i)?, u.try_point(j)?))
}

/// Largest pairwise distance under `norm`; 0 for a singleton.
pub fn diameter(u: &Universe, norm: Norm) -> f64 {
    let n = u.len();
    let mut best = 0.0_f64;
    for i in 0..n {
        let a = u.point(i);
        for j in i + 1..n {
            best = best.max(norm.distance(a, u.point(j)));
        }
    }
    best
}

/// Diameter under a separation metric (normalized for `NormalizedL2`).
pub fn metric_diameter(u: &Universe, metric: MetricKind) -> f64 {
    diameter(u, metric.norm()) / metric.scale(u.dim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(a: &[f64], b: &[f64]) -> Universe {
        Universe::from_rows(&[a.to_vec(), b.to_vec()]).unwrap()
    }

    #[test]
    fn normalized_distance_examples() {
        let u = two(&[0.0], &[1.0]);
        assert_eq!(pairwise_distance(&u, 0, 1, MetricKind::NormalizedL2).unwrap(), 1.0);
        let u = two(&[0.0; 4], &[1.0; 4]);
        assert_eq!(pairwise_distance(&u, 0, 1, MetricKind::NormalizedL2).unwrap(), 1.0);
        let u = two(&[0.3, 0.2], &[0.3, 0.2]);
        assert_eq!(pairwise_distance(&u, 0, 1, MetricKind::LInf).unwrap(), 0.0);
    }

    #[test]
    fn distance_index_out_of_range() {
        let u = two(&[0.0], &[1.0]);
        assert!(matches!(
            pairwise_distance(&u, 0, 2, MetricKind::LInf),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn diameter_examples() {
        let single = Universe::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(diameter(&single, Norm::L2), 0.0);
        let u = two(&[0.0, 0.0], &[1.0, 1.0]);
        assert!((diameter(&u, Norm::L2) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(diameter(&u, Norm::LInf), 1.0);
    }

    #[test]
    fn rejects_bad_universes() {
        assert!(Universe::new(0, vec![]).is_err());
        assert!(Universe::new(2, vec![]).is_err());
        assert!(Universe::new(2, vec![0.0, 1.0, 2.0]).is_err());
        assert!(Universe::new(1, vec![f64::NAN]).is_err());
        let rows: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![0.0]];
        assert!(Universe::from_rows(&rows).is_err());
    }

    #[test]
    fn unit_cube_flag() {
        assert!(two(&[0.0], &[1.0]).in_unit_cube());
        assert!(!two(&[0.0], &[1.5]).in_unit_cube());
    }
}
