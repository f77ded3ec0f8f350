//! Euclidean projection onto the convex hull of an explicit point list.
//!
//! Pairwise Frank-Wolfe with away steps, run in weight space over the vertex
//! Gram matrix: every iteration touches `O(|V|)` numbers regardless of the
//! ambient dimension.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Universe;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const ITERATIONS_PER_VERTEX: usize = 50;
// Small hulls still get enough iterations for the linear rate to kick in.
const MIN_ITERATIONS: usize = 2_000;
const REFRESH_EVERY: usize = 128;
const CORRECT_EVERY: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub tol: f64,
    /// Defaults to `max(50 |V|, 2000)`.
    pub max_iter: Option<usize>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub point: Vec<f64>,
    /// Nonzero convex weights as `(vertex, weight)`.
    pub weights: Vec<(usize, f64)>,
    pub iterations: usize,
    /// Frank-Wolfe gap `max_v <y - p, v - p>` at the returned point.
    pub gap: f64,
    /// `‖y - p‖`.
    pub residual: f64,
    pub certified: bool,
}

/// Optimality test for a candidate projection `p` of `y`.
///
/// Accepts either the scaled first-order condition
/// `max_v <y - p, v - p> <= tol·‖y - p‖·sqrt(m)`, or, for `y` inside the hull
/// where that ratio cannot settle, `gap <= (tol·sqrt(m))^2`, which bounds the
/// distance to the true projection by `tol·sqrt(m)`.
pub fn certificate_holds(gap: f64, residual: f64, tol: f64, m: usize) -> bool {
    let scale = tol * (m as f64).sqrt();
    gap <= scale * residual || gap <= scale * scale
}

/// Explicit Frank-Wolfe gap `max_v <y - p, v - p>`.
pub fn fw_gap(vertices: &Universe, y: &[f64], p: &[f64]) -> f64 {
    let d: Vec<f64> = y.iter().zip(p).map(|(a, b)| a - b).collect();
    let dp: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
    vertices
        .rows()
        .map(|v| d.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - dp)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Projector with the vertex Gram matrix precomputed, reusable across many
/// target points.
#[derive(Clone, Debug)]
pub struct HullProjector<'a> {
    vertices: &'a Universe,
    gram: Vec<f64>,
    degenerate: bool,
}

impl<'a> HullProjector<'a> {
    pub fn new(vertices: &'a Universe) -> Self {
        let n = vertices.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            let a = vertices.point(i);
            for j in i..n {
                let g: f64 = a.iter().zip(vertices.point(j)).map(|(x, y)| x * y).sum();
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let first = vertices.point(0);
        let degenerate = vertices.rows().all(|r| r == first);
        Self {
            vertices,
            gram,
            degenerate,
        }
    }

    pub fn vertices(&self) -> &Universe {
        self.vertices
    }

    pub fn project(&self, y: &[f64], config: &ProjectionConfig) -> Result<ProjectionResult> {
        let m = self.vertices.dim();
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: y.len(),
            });
        }
        if !(config.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", config.tol)));
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(invalid("y", "non-finite coordinate"));
        }
        let n = self.vertices.len();
        let max_iter = config
            .max_iter
            .unwrap_or((ITERATIONS_PER_VERTEX * n).max(MIN_ITERATIONS));

        if self.degenerate {
            return Ok(self.finish(y, vec![1.0].into_iter().chain(std::iter::repeat_n(0.0, n - 1)).collect(), 0, config.tol));
        }

        let g = |i: usize, j: usize| self.gram[i * n + j];
        let b: Vec<f64> = self
            .vertices
            .rows()
            .map(|v| v.iter().zip(y).map(|(a, c)| a * c).sum())
            .collect();
        let yy: f64 = y.iter().map(|x| x * x).sum();
        let scale = config.tol * (m as f64).sqrt();

        let start = (0..n)
            .min_by(|&i, &j| (g(i, i) - 2.0 * b[i]).total_cmp(&(g(j, j) - 2.0 * b[j])))
            .unwrap();
        let mut lambda = vec![0.0; n];
        lambda[start] = 1.0;
        let mut active = vec![start];
        let mut c: Vec<f64> = (0..n).map(|i| g(start, i)).collect();

        let refresh = |lambda: &[f64], active: &[usize], c: &mut [f64]| {
            for (i, ci) in c.iter_mut().enumerate() {
                *ci = active.iter().map(|&a| lambda[a] * g(a, i)).sum();
            }
        };
        let mut iterations = 0;
        while iterations < max_iter {
            if iterations % CORRECT_EVERY == CORRECT_EVERY - 1 {
                self.affine_correction(&b, &mut lambda, &mut active);
                refresh(&lambda, &active, &mut c);
            } else if iterations % REFRESH_EVERY == REFRESH_EVERY - 1 {
                refresh(&lambda, &active, &mut c);
            }
            let mut s = 0;
            let mut grad_s = f64::INFINITY;
            for i in 0..n {
                let gi = c[i] - b[i];
                if gi < grad_s {
                    grad_s = gi;
                    s = i;
                }
            }
            let mut a = active[0];
            let mut grad_a = f64::NEG_INFINITY;
            let mut pgrad = 0.0;
            for &i in &active {
                let gi = c[i] - b[i];
                pgrad += lambda[i] * gi;
                if gi > grad_a {
                    grad_a = gi;
                    a = i;
                }
            }
            let gap = pgrad - grad_s;
            let pp: f64 = active.iter().map(|&i| lambda[i] * c[i]).sum();
            let pb: f64 = active.iter().map(|&i| lambda[i] * b[i]).sum();
            let residual = (yy - 2.0 * pb + pp).max(0.0).sqrt();
            if gap <= scale * residual || gap <= scale * scale || a == s {
                break;
            }
            let denom = g(s, s) + g(a, a) - 2.0 * g(s, a);
            let step = grad_a - grad_s;
            let gamma = if denom > 0.0 {
                (step / denom).min(lambda[a])
            } else {
                lambda[a]
            };
            if lambda[s] == 0.0 {
                active.push(s);
            }
            lambda[s] += gamma;
            if gamma >= lambda[a] {
                lambda[a] = 0.0;
                active.retain(|&i| i != a);
            } else {
                lambda[a] -= gamma;
            }
            for (i, ci) in c.iter_mut().enumerate() {
                *ci += gamma * (g(s, i) - g(a, i));
            }
            iterations += 1;
        }
        let result = self.finish(y, lambda.clone(), iterations, config.tol);
        if result.certified {
            return Ok(result);
        }
        self.affine_correction(&b, &mut lambda, &mut active);
        let corrected = self.finish(y, lambda, iterations, config.tol);
        Ok(if corrected.residual <= result.residual { corrected } else { result })
    }

    fn finish(&self, y: &[f64], lambda: Vec<f64>, iterations: usize, tol: f64) -> ProjectionResult {
        let m = self.vertices.dim();
        let total: f64 = lambda.iter().sum();
        let mut point = vec![0.0; m];
        let mut weights = Vec::new();
        for (i, &w) in lambda.iter().enumerate() {
            if w > 0.0 {
                let w = w / total;
                weights.push((i, w));
                for (p, v) in point.iter_mut().zip(self.vertices.point(i)) {
                    *p += w * v;
                }
            }
        }
        let gap = fw_gap(self.vertices, y, &point).max(0.0);
        let residual = y
            .iter()
            .zip(&point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        ProjectionResult {
            certified: certificate_holds(gap, residual, tol, m),
            point,
            weights,
            iterations,
            gap,
            residual,
        }
    }

    /// Wolfe minor cycle on the active set: move toward the minimizer of
    /// `‖Vλ - y‖` over the affine hull of the active vertices, stopping at the
    /// simplex boundary and dropping the vertex that hits zero. Never
    /// increases the objective. Skipped when the active vertices are affinely
    /// dependent.
    fn affine_correction(&self, b: &[f64], lambda: &mut [f64], active: &mut Vec<usize>) {
        let n = self.vertices.len();
        let g = |i: usize, j: usize| self.gram[i * n + j];
        let objective = |lambda: &[f64], active: &[usize]| -> f64 {
            let mut f = 0.0;
            for &i in active {
                let gi: f64 = active.iter().map(|&j| g(i, j) * lambda[j]).sum();
                f += lambda[i] * (gi - 2.0 * b[i]);
            }
            f
        };
        for _ in 0..n {
            let k = active.len();
            if k < 2 {
                return;
            }
            let base = active[0];
            let rest = &active[1..];
            let dim = k - 1;
            // Normal equations for mu in x = v0 + sum mu_i (v_i - v0).
            let mut mat = vec![0.0; dim * (dim + 1)];
            let mut scale = 0.0_f64;
            for (r, &i) in rest.iter().enumerate() {
                for (q, &j) in rest.iter().enumerate() {
                    let v = g(i, j) - g(i, base) - g(base, j) + g(base, base);
                    mat[r * (dim + 1) + q] = v;
                    if r == q {
                        scale = scale.max(v.abs());
                    }
                }
                mat[r * (dim + 1) + dim] = -(g(i, base) - g(base, base) - b[i] + b[base]);
            }
            if scale == 0.0 {
                return;
            }
            let mu = match solve_dense(&mut mat, dim, 1e-12 * scale) {
                Ok(mu) => mu,
                Err(direction) => {
                    // Affinely dependent active set: slide the weights along
                    // the dependency (the point stays put) until one vertex
                    // leaves, then try again.
                    let mut delta = vec![0.0; k];
                    delta[0] = -direction.iter().sum::<f64>();
                    delta[1..].copy_from_slice(&direction);
                    if !delta.iter().any(|&d| d > 0.0) {
                        delta.iter_mut().for_each(|d| *d = -*d);
                    }
                    let (pos, t) = active
                        .iter()
                        .zip(&delta)
                        .enumerate()
                        .filter(|(_, (_, &d))| d > 0.0)
                        .map(|(pos, (&i, &d))| (pos, lambda[i] / d))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap();
                    for (&i, &d) in active.iter().zip(&delta) {
                        lambda[i] = (lambda[i] - t * d).max(0.0);
                    }
                    lambda[active[pos]] = 0.0;
                    active.remove(pos);
                    continue;
                }
            };
            let mut target = vec![0.0; k];
            target[0] = 1.0 - mu.iter().sum::<f64>();
            target[1..].copy_from_slice(&mu);

            // Largest step toward the target keeping all weights nonnegative.
            let mut step = 1.0_f64;
            let mut drop = None;
            for (pos, (&i, &w)) in active.iter().zip(&target).enumerate() {
                if w <= 0.0 && lambda[i] - w > 0.0 {
                    let s = lambda[i] / (lambda[i] - w);
                    if s < step {
                        step = s;
                        drop = Some(pos);
                    }
                }
            }
            let mut candidate = lambda.to_vec();
            for (&i, &w) in active.iter().zip(&target) {
                candidate[i] = (lambda[i] + step * (w - lambda[i])).max(0.0);
            }
            if let Some(pos) = drop {
                candidate[active[pos]] = 0.0;
            }
            if objective(&candidate, active) > objective(lambda, active) {
                return;
            }
            lambda.copy_from_slice(&candidate);
            match drop {
                Some(pos) => {
                    active.remove(pos);
                }
                None => return,
            }
        }
    }
}

/// Gaussian elimination with partial pivoting on an augmented `dim x (dim+1)`
/// matrix. When a pivot falls below `min_pivot` the leading columns are
/// (numerically) dependent and the dependency coefficients are returned as
/// the error value.
fn solve_dense(aug: &mut [f64], dim: usize, min_pivot: f64) -> std::result::Result<Vec<f64>, Vec<f64>> {
    let w = dim + 1;
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&a, &b| aug[a * w + col].abs().total_cmp(&aug[b * w + col].abs()))
            .unwrap();
        if aug[pivot * w + col].abs() <= min_pivot {
            let mut z = vec![0.0; dim];
            z[col] = 1.0;
            for r in (0..col).rev() {
                let mut acc = aug[r * w + col];
                for q in r + 1..col {
                    acc += aug[r * w + q] * z[q];
                }
                z[r] = -acc / aug[r * w + r];
            }
            return Err(z);
        }
        if pivot != col {
            for q in 0..w {
                aug.swap(col * w + q, pivot * w + q);
            }
        }
        let p = aug[col * w + col];
        for r in col + 1..dim {
            let f = aug[r * w + col] / p;
            if f != 0.0 {
                for q in col..w {
                    aug[r * w + q] -= f * aug[col * w + q];
                }
            }
        }
    }
    let mut x = vec![0.0; dim];
    for r in (0..dim).rev() {
        let mut acc = aug[r * w + dim];
        for q in r + 1..dim {
            acc -= aug[r * w + q] * x[q];
        }
        x[r] = acc / aug[r * w + r];
    }
    Ok(x)
}

/// One-shot projection of `y` onto `conv(vertices)`.
pub fn project_onto_hull(y: &[f64], vertices: &Universe, tol: f64, max_iter: Option<usize>) -> Result<ProjectionResult> {
    HullProjector::new(vertices).project(y, &ProjectionConfig { tol, max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn segment() -> Universe {
        Universe::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn vertex_projects_to_itself() {
        let v = Universe::from_rows(&[vec![0.2, 0.1], vec![0.9, 0.4], vec![0.3, 0.8]]).unwrap();
        let r = project_onto_hull(&[0.9, 0.4], &v, DEFAULT_TOL, None).unwrap();
        assert_eq!(r.point, vec![0.9, 0.4]);
        assert_eq!(r.gap, 0.0);
        assert!(r.certified);
    }

    #[test]
    fn segment_examples() {
        let r = project_onto_hull(&[0.5, 1.0], &segment(), DEFAULT_TOL, None).unwrap();
        assert!(dist(&r.point, &[0.5, 0.0]) < 1e-9, "{r:?}");
        assert!(r.certified);
        let r = project_onto_hull(&[2.0, 3.0], &segment(), DEFAULT_TOL, None).unwrap();
        assert!(dist(&r.point, &[1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn degenerate_hull() {
        let v = Universe::from_rows(&[vec![0.3, 0.3], vec![0.3, 0.3]]).unwrap();
        let r = project_onto_hull(&[5.0, -1.0], &v, DEFAULT_TOL, None).unwrap();
        assert_eq!(r.point, vec![0.3, 0.3]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn interior_point_is_fixed() {
        let v = Universe::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = project_onto_hull(&[0.2, 0.3], &v, DEFAULT_TOL, None).unwrap();
        assert!(dist(&r.point, &[0.2, 0.3]) < 1e-7);
        assert!(r.certified, "{r:?}");
        let total: f64 = r.weights.iter().map(|w| w.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_inputs() {
        let v = segment();
        assert!(project_onto_hull(&[0.0], &v, DEFAULT_TOL, None).is_err());
        assert!(project_onto_hull(&[0.0, 0.0], &v, 0.0, None).is_err());
        assert!(project_onto_hull(&[f64::NAN, 0.0], &v, DEFAULT_TOL, None).is_err());
    }

    #[test]
    fn iteration_cap_flags_non_certified() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.157;
                vec![a.cos(), a.sin(), (3.0 * a).sin() * 0.1]
            })
            .collect();
        let v = Universe::from_rows(&rows).unwrap();
        let r = project_onto_hull(&[0.05, 0.02, 0.0], &v, 1e-12, Some(2)).unwrap();
        assert_eq!(r.iterations, 2);
        assert!(!r.certified);
    }

    fn hull_and_points() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        (1usize..=4).prop_flat_map(|m| {
            (
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, m), 1..8),
                prop::collection::vec(-2.0f64..2.0, m),
                prop::collection::vec(-2.0f64..2.0, m),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_properties((rows, y1, y2) in hull_and_points()) {
            let v = Universe::from_rows(&rows).unwrap();
            let m = v.dim() as f64;
            let tol = DEFAULT_TOL;
            let slack = tol * m.sqrt();
            let p = HullProjector::new(&v);
            let cfg = ProjectionConfig::default();
            let r1 = p.project(&y1, &cfg).unwrap();
            let r2 = p.project(&y2, &cfg).unwrap();
            prop_assert!(r1.certified && r2.certified, "{:?} {:?} {:?} {:?}", r1, r2, y1, y2);
            let total: f64 = r1.weights.iter().map(|w| w.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(r1.weights.iter().all(|w| w.1 >= 0.0));
            // Non-expansive.
            let d_out = dist(&r1.point, &r2.point);
            let d_in = dist(&y1, &y2);
            prop_assert!(d_out <= d_in + 2.0 * slack, "{} > {}", d_out, d_in);
            // Idempotent.
            let again = p.project(&r1.point, &cfg).unwrap();
            prop_assert!(dist(&again.point, &r1.point) <= 2.0 * slack, "{:?} {:?}", again, r1);
            // No farther than the nearest vertex.
            let nearest = v.rows().map(|row| dist(row, &y1)).fold(f64::INFINITY, f64::min);
            prop_assert!(r1.residual <= nearest + slack);
        }
    }
}
