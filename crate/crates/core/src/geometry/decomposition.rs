//! Multi-scale chaining decomposition of a finite universe.
//!
//! For `X ⊂ ΔB` the universe is written as a Minkowski sum
//! `X ⊂ X(1) + ... + X(k) + (α/2)ΔB` with `k = ceil(log2(2/α))`. Level `j`
//! is built from a maximal `2^-j`-separated set `S_j` (distance measured as
//! `‖x − y‖ / Δ`) and contains the increments `s − π_{j−1}(s)`, `s ∈ S_j`,
//! where `π_j` maps a point to a nearest element of `S_j`.

use serde::{Deserialize, Serialize};

use super::packing::{greedy_by_norm, nearest_center};
use super::universe::{Norm, Universe};
use crate::error::{invalid, Result};

/// Absolute tolerance, per `sqrt(m)`, for the reconstruction identities.
pub const RECONSTRUCTION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub alpha: f64,
    pub norm: Norm,
    pub delta: f64,
    /// Level point sets; row `p` of level `j` comes from `generators[j][p]`.
    pub levels: Vec<Universe>,
    /// `S_j` as universe row indices.
    pub generators: Vec<Vec<usize>>,
    /// `assignments[j][x]` is the row of `levels[j]` used for universe point `x`.
    pub assignments: Vec<Vec<usize>>,
    /// `2^{-j+1} Δ` for 1-based level `j`.
    pub level_radii: Vec<f64>,
    /// `(α/2) Δ`.
    pub remainder_radius: f64,
}

/// Number of levels: the smallest `k` with `2^-k <= α/2`.
pub fn level_count(alpha: f64) -> usize {
    let mut k = 1;
    let mut scaled = alpha * 2.0;
    while scaled < 2.0 {
        k += 1;
        scaled *= 2.0;
    }
    k
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// The natural scale for a norm on a `[0,1]^m` universe: `sqrt(m)` for L2,
/// 1 for L-infinity.
pub fn default_delta(norm: Norm, m: usize) -> f64 {
    match norm {
        Norm::L2 => (m as f64).sqrt(),
        Norm::LInf => 1.0,
    }
}

pub fn chaining_decomposition(
    u: &Universe,
    alpha: f64,
    norm: Norm,
    delta: f64,
) -> Result<Decomposition> {
    check_alpha(alpha)?;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    let max_norm = u.max_norm(norm);
    if max_norm > delta * (1.0 + 1e-12) + RECONSTRUCTION_TOL {
        return Err(invalid(
            "delta",
            format!("universe has a point of norm {max_norm} outside the ball of radius {delta}"),
        ));
    }
    let k = level_count(alpha);
    let n = u.len();
    let order: Vec<usize> = (0..n).collect();

    let mut generators = Vec::with_capacity(k);
    // nearest[j][x]: position in S_j of a nearest generator to universe point x.
    let mut nearest: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut scale = 1.0;
    for _ in 0..k {
        scale *= 0.5;
        let s = greedy_by_norm(u, norm, scale * delta, &order);
        let centers = u.subset(&s)?;
        nearest.push(u.rows().map(|p| nearest_center(p, &centers, norm)).collect());
        generators.push(s);
    }

    let m = u.dim();
    let mut levels = Vec::with_capacity(k);
    for j in 0..k {
        let mut pts = Vec::with_capacity(generators[j].len() * m);
        for &s in &generators[j] {
            let x = u.point(s);
            if j == 0 {
                pts.extend_from_slice(x);
            } else {
                let parent = generators[j - 1][nearest[j - 1][s]];
                pts.extend(x.iter().zip(u.point(parent)).map(|(a, b)| a - b));
            }
        }
        levels.push(Universe::new(m, pts)?);
    }

    let mut assignments = vec![vec![0usize; n]; k];
    for x in 0..n {
        let mut pos = nearest[k - 1][x];
        assignments[k - 1][x] = pos;
        for j in (0..k - 1).rev() {
            let above = generators[j + 1][pos];
            pos = nearest[j][above];
            assignments[j][x] = pos;
        }
    }

    let level_radii = (0..k).map(|j| delta / f64::powi(2.0, j as i32)).collect();
    Ok(Decomposition {
        alpha,
        norm,
        delta,
        levels,
        generators,
        assignments,
        level_radii,
        remainder_radius: alpha / 2.0 * delta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecompositionViolation {
    LevelCount { expected: usize, got: usize },
    Reconstruction { point: usize, residual: f64 },
    LevelRadius { level: usize, row: usize, norm: f64 },
    Separation { level: usize, a: usize, b: usize, distance: f64 },
}

impl Decomposition {
    /// One level holding the universe itself and a zero remainder.
    pub fn identity(u: &Universe, norm: Norm) -> Decomposition {
        let radius = u.max_norm(norm);
        Decomposition {
            alpha: 1.0,
            norm,
            delta: radius,
            levels: vec![u.clone()],
            generators: vec![(0..u.len()).collect()],
            assignments: vec![(0..u.len()).collect()],
            level_radii: vec![radius],
            remainder_radius: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn component(&self, level: usize, x: usize) -> &[f64] {
        self.levels[level].point(self.assignments[level][x])
    }

    /// Sum of the level components assigned to universe point `x`.
    pub fn reconstruct(&self, x: usize) -> Vec<f64> {
        let m = self.levels[0].dim();
        let mut out = vec![0.0; m];
        for j in 0..self.k() {
            for (o, c) in out.iter_mut().zip(self.component(j, x)) {
                *o += c;
            }
        }
        out
    }

    /// Checks every structural invariant against the source universe.
    pub fn verify(&self, u: &Universe) -> Vec<DecompositionViolation> {
        let mut out = Vec::new();
        let tol = RECONSTRUCTION_TOL * (u.dim() as f64).sqrt();
        if self.remainder_radius > 0.0 {
            let expected = level_count(self.alpha);
            if expected != self.k() {
                out.push(DecompositionViolation::LevelCount {
                    expected,
                    got: self.k(),
                });
            }
        }
        for x in 0..u.len() {
            let rec = self.reconstruct(x);
            let residual = self.norm.distance(u.point(x), &rec);
            if residual > self.remainder_radius + tol {
                out.push(DecompositionViolation::Reconstruction { point: x, residual });
            }
        }
        for (j, level) in self.levels.iter().enumerate() {
            for (row, p) in level.rows().enumerate() {
                let norm = self.norm.of(p);
                if norm > self.level_radii[j] + tol {
                    out.push(DecompositionViolation::LevelRadius { level: j, row, norm });
                }
            }
        }
        if self.remainder_radius > 0.0 {
            for (j, gens) in self.generators.iter().enumerate() {
                let t = self.delta / f64::powi(2.0, j as i32 + 1);
                for (a_pos, &a) in gens.iter().enumerate() {
                    for &b in &gens[a_pos + 1..] {
                        let distance = self.norm.distance(u.point(a), u.point(b));
                        if distance <= t {
                            out.push(DecompositionViolation::Separation {
                                level: j,
                                a,
                                b,
                                distance: distance / self.delta,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// JSON-friendly export: levels as nested arrays.
    pub fn export(&self) -> DecompositionExport {
        DecompositionExport {
            k: self.k(),
            alpha: self.alpha,
            norm: self.norm,
            delta: self.delta,
            levels: self
                .levels
                .iter()
                .map(|l| l.rows().map(|r| r.to_vec()).collect())
                .collect(),
            generators: self.generators.clone(),
            assignments: self.assignments.clone(),
            level_radii: self.level_radii.clone(),
            remainder_radius: self.remainder_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionExport {
    pub k: usize,
    pub alpha: f64,
    pub norm: Norm,
    pub delta: f64,
    pub levels: Vec<Vec<Vec<f64>>>,
    pub generators: Vec<Vec<usize>>,
    pub assignments: Vec<Vec<usize>>,
    pub level_radii: Vec<f64>,
    pub remainder_radius: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid9() -> Universe {
        let mut rows = Vec::new();
        for a in [0.0, 0.5, 1.0] {
            for b in [0.0, 0.5, 1.0] {
                rows.push(vec![a, b]);
            }
        }
        Universe::from_rows(&rows).unwrap()
    }

    #[test]
    fn level_counts() {
        assert_eq!(level_count(1.0), 1);
        assert_eq!(level_count(0.5), 2);
        assert_eq!(level_count(0.25), 3);
        assert_eq!(level_count(0.1), 5);
        assert_eq!(level_count(0.3), 3);
    }

    #[test]
    fn alpha_one_has_single_level() {
        let u = grid9();
        let d = chaining_decomposition(&u, 1.0, Norm::L2, 2f64.sqrt()).unwrap();
        assert_eq!(d.k(), 1);
        assert!(d.verify(&u).is_empty());
    }

    #[test]
    fn grid_invariants_hold() {
        let u = grid9();
        for norm in [Norm::L2, Norm::LInf] {
            let delta = default_delta(norm, 2);
            let d = chaining_decomposition(&u, 0.25, norm, delta).unwrap();
            assert_eq!(d.k(), 3);
            assert_eq!(d.verify(&u), vec![]);
            for x in 0..u.len() {
                let r = norm.distance(u.point(x), &d.reconstruct(x));
                assert!(r <= 0.125 * delta + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let u = grid9();
        assert!(chaining_decomposition(&u, 0.0, Norm::L2, 2.0).is_err());
        assert!(chaining_decomposition(&u, 1.5, Norm::L2, 2.0).is_err());
        // The point (1,1) has norm sqrt(2) > 1.
        assert!(chaining_decomposition(&u, 0.5, Norm::L2, 1.0).is_err());
    }

    #[test]
    fn identity_decomposition() {
        let u = grid9();
        let d = Decomposition::identity(&u, Norm::L2);
        assert_eq!(d.k(), 1);
        for x in 0..u.len() {
            assert_eq!(d.reconstruct(x), u.point(x));
        }
        assert!(d.verify(&u).is_empty());
    }
}
