//! Universe and dataset generators.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::central::Dataset;
use crate::error::{invalid, Error, Result};
use crate::geometry::Universe;
use crate::rng::{derive_seed, rng_from_seed, streams, Rng};

/// Default cap on the number of points `gen_marginals2` may create.
pub const DEFAULT_MARGINALS_CAP: usize = 1 << 14;
/// Default number of base and ray samples for the cone.
pub const DEFAULT_CONE_DENSITY: usize = 200;

/// Threshold queries `q_t(x) = 1{x < t}` for `x, t ∈ {1..m}`: point `x` has
/// coordinate `t` equal to `q_t(x)`.
pub fn gen_thresholds(m: usize) -> Result<Universe> {
    if m == 0 {
        return Err(invalid("m", "must be at least 1"));
    }
    let mut pts = Vec::with_capacity(m * m);
    for x in 1..=m {
        pts.extend((1..=m).map(|t| if x < t { 1.0 } else { 0.0 }));
    }
    Universe::new(m, pts)?.with_labels((1..=m).map(|x| format!("x{x}")).collect())
}

/// 2-way marginal queries over `{0,1}^d`: the point for bitstring `b` has
/// coordinate `(i, j)`, `i < j` in lexicographic order, equal to `b_i b_j`.
/// Bit `i` of row `r` is bit `i` of the integer `r`.
pub fn gen_marginals2(d: usize, cap: usize) -> Result<Universe> {
    if d < 2 {
        return Err(invalid("d", "must be at least 2"));
    }
    if d >= usize::BITS as usize - 1 || (1usize << d) > cap {
        return Err(Error::CapExceeded(format!("2^{d} points exceeds the cap of {cap}")));
    }
    let m = d * (d - 1) / 2;
    let mut pts = Vec::with_capacity((1 << d) * m);
    for b in 0..1usize << d {
        let bit = |i: usize| ((b >> i) & 1) as f64;
        for i in 0..d {
            for j in i + 1..d {
                pts.push(bit(i) * bit(j));
            }
        }
    }
    Universe::new(m, pts)
}

fn gaussian_direction(rng: &mut Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Discretized cone with apex at the origin over the ball of radius `α√m`
/// centered at `(1−α)√m e₁`: the apex, the base center, `density` uniform
/// points on the base sphere and `density` points `s·b` along rays to base
/// points `b`, `s` uniform in `[0, 1]`. Points are not clipped; the universe
/// records whether they stay in `[0,1]^m`.
pub fn gen_cone(m: usize, alpha: f64, density: usize, seed: u64) -> Result<Universe> {
    if m < 2 {
        return Err(invalid("m", "the cone needs m >= 2"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let root_m = (m as f64).sqrt();
    let mut center = vec![0.0; m];
    center[0] = (1.0 - alpha) * root_m;
    let radius = alpha * root_m;

    let mut rng = rng_from_seed(derive_seed(seed, streams::GENERATOR, 0));
    let mut pts = vec![0.0; m];
    pts.extend_from_slice(&center);
    let mut labels = vec!["apex".to_string(), "base_center".to_string()];
    let mut base = Vec::with_capacity(density);
    for i in 0..density {
        let dir = gaussian_direction(&mut rng, m);
        let b: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + radius * d).collect();
        pts.extend_from_slice(&b);
        labels.push(format!("base{i}"));
        base.push(b);
    }
    for i in 0..density {
        let b = &base[rng.random_range(0..density)];
        let s: f64 = rng.random();
        pts.extend(b.iter().map(|v| s * v));
        labels.push(format!("ray{i}"));
    }
    Universe::new(m, pts)?.with_labels(labels)
}

/// `size` uniform points on the sphere of the given radius about the origin.
pub fn gen_random_sphere(m: usize, size: usize, radius: f64, seed: u64) -> Result<Universe> {
    if m == 0 || size == 0 {
        return Err(invalid("size", "need m >= 1 and at least one point"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, streams::GENERATOR, 1));
    let mut pts = Vec::with_capacity(m * size);
    for _ in 0..size {
        pts.extend(gaussian_direction(&mut rng, m).into_iter().map(|v| v * radius));
    }
    Universe::new(m, pts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DatasetMode {
    IidUniform,
    PointMass { index: usize },
    /// With probability `anchor_weight` draw a uniform anchor, otherwise a
    /// uniform universe point.
    Mixture { anchors: Vec<usize>, anchor_weight: f64 },
}

pub fn gen_dataset<'u>(u: &'u Universe, n: usize, mode: &DatasetMode, seed: u64) -> Result<Dataset<'u>> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, streams::GENERATOR, 2));
    let len = u.len();
    let indices = match mode {
        DatasetMode::IidUniform => (0..n).map(|_| rng.random_range(0..len)).collect(),
        DatasetMode::PointMass { index } => vec![*index; n],
        DatasetMode::Mixture { anchors, anchor_weight } => {
            if anchors.is_empty() || !(0.0..=1.0).contains(anchor_weight) {
                return Err(invalid("mixture", "needs anchors and a weight in [0, 1]"));
            }
            (0..n)
                .map(|_| {
                    if rng.random_bool(*anchor_weight) {
                        *anchors.choose(&mut rng).unwrap()
                    } else {
                        rng.random_range(0..len)
                    }
                })
                .collect()
        }
    };
    Dataset::new(u, indices)
}
