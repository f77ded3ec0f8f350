//! Separated sets, covers and separation (packing) numbers.
//!
//! Separation is strict: two points are `t`-separated when their distance is
//! greater than `t`. A maximal separated set is therefore a closed `t`-cover.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::universe::{MetricKind, Norm, Universe};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, rng_from_seed, streams};

pub const DEFAULT_EXACT_CAP: usize = 24;
const HARD_EXACT_CAP: usize = 64;

/// Order in which the greedy pass offers points for insertion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InsertionOrder {
    #[default]
    Ascending,
    Shuffled {
        seed: u64,
    },
}

impl InsertionOrder {
    pub fn permutation(self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if let InsertionOrder::Shuffled { seed } = self {
            let mut rng = rng_from_seed(derive_seed(seed, streams::ORDER, n as u64));
            order.shuffle(&mut rng);
        }
        order
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSet {
    pub indices: Vec<usize>,
    pub t: f64,
    pub metric: MetricKind,
    pub maximal: bool,
    pub order: InsertionOrder,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackingMode {
    Greedy,
    Exact,
}

/// Greedy pass under a raw norm: a point is kept when it is farther than
/// `threshold` from every point kept so far.
pub(crate) fn greedy_by_norm(
    u: &Universe,
    norm: Norm,
    threshold: f64,
    order: &[usize],
) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &i in order {
        let p = u.point(i);
        if kept.iter().all(|&k| norm.distance(p, u.point(k)) > threshold) {
            kept.push(i);
        }
    }
    kept
}

fn check_scale(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("scale must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Inclusion-maximal `t`-separated subset of the universe.
pub fn greedy_separated_set(
    u: &Universe,
    t: f64,
    metric: MetricKind,
    order: InsertionOrder,
) -> Result<SeparatedSet> {
    check_scale(t)?;
    let perm = order.permutation(u.len());
    let threshold = t * metric.scale(u.dim());
    let indices = greedy_by_norm(u, metric.norm(), threshold, &perm);
    Ok(SeparatedSet {
        indices,
        t,
        metric,
        maximal: true,
        order,
    })
}

/// True when every universe point is within `t` of some selected point.
pub fn is_cover(u: &Universe, centers: &[usize], t: f64, metric: MetricKind) -> bool {
    u.rows().all(|p| {
        centers
            .iter()
            .any(|&c| metric.distance(p, u.point(c)) <= t)
    })
}

/// True when all selected points are pairwise farther than `t` apart.
pub fn is_separated(u: &Universe, indices: &[usize], t: f64, metric: MetricKind) -> bool {
    indices.iter().enumerate().all(|(a, &i)| {
        indices[a + 1..]
            .iter()
            .all(|&j| metric.distance(u.point(i), u.point(j)) > t)
    })
}

/// Separation number estimate. Greedy mode returns the size of a maximal
/// separated set (a lower bound on the separation number and an upper bound
/// on the covering number); exact mode solves maximum independent set on the
/// conflict graph and is limited to `cap` points.
pub fn packing_number(
    u: &Universe,
    t: f64,
    metric: MetricKind,
    mode: PackingMode,
    cap: usize,
) -> Result<usize> {
    check_scale(t)?;
    match mode {
        PackingMode::Greedy => Ok(greedy_separated_set(u, t, metric, InsertionOrder::Ascending)?.len()),
        PackingMode::Exact => Ok(exact_packing(u, t, metric, cap)?.len()),
    }
}

/// Largest `t`-separated subset, by branch and bound.
pub fn exact_packing(u: &Universe, t: f64, metric: MetricKind, cap: usize) -> Result<Vec<usize>> {
    check_scale(t)?;
    let n = u.len();
    let cap = cap.min(HARD_EXACT_CAP);
    if n > cap {
        return Err(Error::ExactPackingCap { cap, len: n });
    }
    // conflict[i] has bit j set when i and j are too close to coexist.
    let mut conflict = vec![0u64; n];
    for i in 0..n {
        for j in i + 1..n {
            if metric.distance(u.point(i), u.point(j)) <= t {
                conflict[i] |= 1 << j;
                conflict[j] |= 1 << i;
            }
        }
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut best = 0u64;
    max_independent(&conflict, all, 0, &mut best);
    Ok((0..n).filter(|&i| best >> i & 1 == 1).collect())
}

fn max_independent(conflict: &[u64], candidates: u64, chosen: u64, best: &mut u64) {
    if candidates == 0 {
        if chosen.count_ones() > best.count_ones() {
            *best = chosen;
        }
        return;
    }
    if chosen.count_ones() + candidates.count_ones() <= best.count_ones() {
        return;
    }
    // Branch on the candidate with the most conflicts among the candidates.
    let mut pick = candidates.trailing_zeros() as usize;
    let mut pick_deg = 0;
    let mut rest = candidates;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let deg = (conflict[v] & candidates).count_ones();
        if deg > pick_deg {
            pick = v;
            pick_deg = deg;
        }
    }
    let bit = 1u64 << pick;
    if pick_deg == 0 {
        // No conflicts left: take every candidate.
        let all = chosen | candidates;
        if all.count_ones() > best.count_ones() {
            *best = all;
        }
        return;
    }
    max_independent(
        conflict,
        candidates & !bit & !conflict[pick],
        chosen | bit,
        best,
    );
    max_independent(conflict, candidates & !bit, chosen, best);
}

/// Index (into `centers`) of a nearest center for every universe point;
/// ties go to the lowest center index.
pub fn nearest_point_map(u: &Universe, centers: &Universe, norm: Norm) -> Result<Vec<usize>> {
    if centers.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: centers.dim(),
        });
    }
    Ok(u.rows().map(|p| nearest_center(p, centers, norm)).collect())
}

pub(crate) fn nearest_center(p: &[f64], centers: &Universe, norm: Norm) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, row) in centers.rows().enumerate() {
        let d = norm.distance(p, row);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Universe {
        Universe::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn singleton_packs_to_one() {
        let u = Universe::from_rows(&[vec![0.2, 0.7, 0.1]]).unwrap();
        for t in [1e-6, 0.3, 5.0] {
            let s = greedy_separated_set(&u, t, MetricKind::NormalizedL2, InsertionOrder::Ascending)
                .unwrap();
            assert_eq!(s.indices, vec![0]);
        }
    }

    #[test]
    fn unit_cube_at_scale_one_packs_to_one() {
        let u = Universe::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]])
            .unwrap();
        for metric in [MetricKind::NormalizedL2, MetricKind::LInf] {
            let s = greedy_separated_set(&u, 1.0, metric, InsertionOrder::Ascending).unwrap();
            assert_eq!(s.len(), 1);
            assert_eq!(packing_number(&u, 1.0, metric, PackingMode::Exact, 24).unwrap(), 1);
        }
    }

    #[test]
    fn three_points_on_a_line() {
        let u = line(&[0.0, 0.5, 1.0]);
        let s = greedy_separated_set(&u, 0.4, MetricKind::NormalizedL2, InsertionOrder::Ascending)
            .unwrap();
        assert_eq!(s.indices, vec![0, 1, 2]);
        assert!(s.maximal);
    }

    #[test]
    fn separation_is_strict() {
        let u = line(&[0.0, 0.5]);
        assert_eq!(packing_number(&u, 0.6, MetricKind::NormalizedL2, PackingMode::Exact, 24).unwrap(), 1);
        assert_eq!(packing_number(&u, 0.4, MetricKind::NormalizedL2, PackingMode::Exact, 24).unwrap(), 2);
        assert_eq!(packing_number(&u, 0.5, MetricKind::NormalizedL2, PackingMode::Exact, 24).unwrap(), 1);
    }

    #[test]
    fn greedy_can_be_suboptimal_but_exact_is_not() {
        // Greedy from the middle point blocks both ends.
        let u = line(&[0.5, 0.0, 1.0]);
        let g = packing_number(&u, 0.6, MetricKind::NormalizedL2, PackingMode::Greedy, 24).unwrap();
        let e = packing_number(&u, 0.6, MetricKind::NormalizedL2, PackingMode::Exact, 24).unwrap();
        assert_eq!((g, e), (1, 2));
    }

    #[test]
    fn exact_mode_respects_cap() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let u = line(&xs);
        assert!(matches!(
            packing_number(&u, 0.1, MetricKind::LInf, PackingMode::Exact, DEFAULT_EXACT_CAP),
            Err(Error::ExactPackingCap { cap: 24, len: 30 })
        ));
    }

    #[test]
    fn invalid_scale() {
        let u = line(&[0.0]);
        assert!(greedy_separated_set(&u, 0.0, MetricKind::LInf, InsertionOrder::Ascending).is_err());
        assert!(greedy_separated_set(&u, f64::NAN, MetricKind::LInf, InsertionOrder::Ascending).is_err());
    }

    #[test]
    fn nearest_point_examples() {
        let u = line(&[0.0, 0.4, 1.0, 0.5]);
        let centers = line(&[0.0, 1.0]);
        assert_eq!(nearest_point_map(&u, &centers, Norm::L2).unwrap(), vec![0, 0, 1, 0]);
        assert_eq!(nearest_point_map(&u, &u, Norm::L2).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn shuffled_order_is_reproducible() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).fract()).collect();
        let u = line(&xs);
        let order = InsertionOrder::Shuffled { seed: 9 };
        let a = greedy_separated_set(&u, 0.05, MetricKind::LInf, order).unwrap();
        let b = greedy_separated_set(&u, 0.05, MetricKind::LInf, order).unwrap();
        assert_eq!(a, b);
        assert!(is_cover(&u, &a.indices, 0.05, MetricKind::LInf));
        assert!(is_separated(&u, &a.indices, 0.05, MetricKind::LInf));
    }
}
