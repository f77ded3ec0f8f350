//! Scale grids and separation-number profiles used by the bound estimators.

use serde::{Deserialize, Serialize};

use super::packing::{exact_packing, greedy_separated_set, InsertionOrder, PackingMode};
use super::universe::{metric_diameter, MetricKind, Universe};
use crate::error::Result;

/// Grid points per octave.
pub const GRID_STEPS_PER_OCTAVE: i32 = 4;

/// Geometric grid `{2^(i/4)} ∩ [t_min, t_max)` followed by `t_max`.
///
/// The lattice is anchored at 1, so grids for a smaller `t_min` contain the
/// grids for larger ones.
pub fn scale_grid(t_min: f64, t_max: f64) -> Vec<f64> {
    if !(t_min > 0.0) || !(t_max > 0.0) || t_min > t_max {
        return Vec::new();
    }
    let steps = GRID_STEPS_PER_OCTAVE as f64;
    let mut i = (t_min.log2() * steps).floor() as i64;
    let point = |i: i64| 2f64.powf(i as f64 / steps);
    while point(i) < t_min {
        i += 1;
    }
    let mut grid = Vec::new();
    while point(i) < t_max {
        grid.push(point(i));
        i += 1;
    }
    grid.push(t_max);
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub t: f64,
    pub packing: usize,
    pub log_packing: f64,
}

/// Separation-number estimates over `scale_grid(t_min, diameter)`.
///
/// In greedy mode the raw greedy counts are replaced by their running maximum
/// from the right. A set separated at a larger scale is separated at every
/// smaller one, so the envelope is still a certified lower bound on the
/// separation number and is non-increasing in `t`.
pub fn packing_profile(
    u: &Universe,
    metric: MetricKind,
    t_min: f64,
    mode: PackingMode,
    exact_cap: usize,
) -> Result<Vec<ProfilePoint>> {
    let grid = scale_grid(t_min, metric_diameter(u, metric));
    let mut counts = Vec::with_capacity(grid.len());
    for &t in &grid {
        let c = match mode {
            PackingMode::Greedy => {
                greedy_separated_set(u, t, metric, InsertionOrder::Ascending)?.len()
            }
            PackingMode::Exact => exact_packing(u, t, metric, exact_cap)?.len(),
        };
        counts.push(c);
    }
    for i in (0..counts.len().saturating_sub(1)).rev() {
        counts[i] = counts[i].max(counts[i + 1]);
    }
    Ok(grid
        .into_iter()
        .zip(counts)
        .map(|(t, packing)| ProfilePoint {
            t,
            packing,
            log_packing: (packing as f64).ln(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_and_ratio() {
        let g = scale_grid(0.1, 1.0);
        assert!(g[0] >= 0.1 && g[0] < 0.1 * 2f64.powf(0.25));
        assert_eq!(*g.last().unwrap(), 1.0);
        for w in g.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in g[..g.len() - 1].windows(2) {
            assert!((w[1] / w[0] - 2f64.powf(0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn grids_are_nested() {
        let coarse = scale_grid(0.2, 0.9);
        let fine = scale_grid(0.05, 0.9);
        for t in coarse {
            assert!(fine.contains(&t));
        }
    }

    #[test]
    fn degenerate_grids() {
        assert!(scale_grid(0.1, 0.0).is_empty());
        assert!(scale_grid(2.0, 1.0).is_empty());
        assert_eq!(scale_grid(0.5, 0.5), vec![0.5]);
    }

    #[test]
    fn profile_is_monotone() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.618).fract(), (i as f64 * 0.414).fract()])
            .collect();
        let u = Universe::from_rows(&rows).unwrap();
        let p = packing_profile(&u, MetricKind::NormalizedL2, 0.01, PackingMode::Greedy, 24).unwrap();
        for w in p.windows(2) {
            assert!(w[0].packing >= w[1].packing);
        }
        assert_eq!(p.last().unwrap().packing, 1);
    }
}
