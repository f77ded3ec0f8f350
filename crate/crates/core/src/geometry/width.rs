use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::packing::PackingMode;
use super::profile::packing_profile;
use super::universe::{metric_diameter, MetricKind, Universe};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, rng_from_seed, streams};

const CHUNK: usize = 1024;

/// `h_X(z) = max_{x in X} <x, z>`.
pub fn support_function(u: &Universe, direction: &[f64]) -> Result<f64> {
    if direction.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: direction.len(),
        });
    }
    Ok(support(u, direction))
}

pub(crate) fn support(u: &Universe, direction: &[f64]) -> f64 {
    u.rows()
        .map(|p| p.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of the Gaussian mean width `E h_X(Z)`.
///
/// Samples are drawn in fixed-size chunks with per-chunk seeds and summed in
/// chunk order, so the result does not depend on the thread count.
pub fn gaussian_mean_width(u: &Universe, samples: usize, seed: u64) -> Result<WidthEstimate> {
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    let chunks = samples.div_ceil(CHUNK);
    let m = u.dim();
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, streams::WIDTH, c as u64));
            let count = CHUNK.min(samples - c * CHUNK);
            let mut z = vec![0.0; m];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let h = support(u, &z);
                s += h;
                s2 += h * h;
            }
            (s, s2)
        })
        .collect();
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(WidthEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}

/// Right-hand side of the coarse Dudley estimate with unit constant:
/// `sqrt(m) · ln(4Δ/α) · sup{ t·sqrt(ln P(X,t)) : t ≥ α/4 }`, where `Δ` is the
/// normalized diameter and the sup runs over the standard scale grid.
pub fn coarse_dudley_bound(u: &Universe, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let profile = packing_profile(u, MetricKind::NormalizedL2, alpha / 4.0, PackingMode::Greedy, 0)?;
    let sup = profile
        .iter()
        .map(|p| p.t * p.log_packing.sqrt())
        .fold(0.0, f64::max);
    let delta = metric_diameter(u, MetricKind::NormalizedL2);
    let log_factor = (4.0 * delta / alpha).ln().max(0.0);
    Ok((u.dim() as f64).sqrt() * log_factor * sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_examples() {
        let u = Universe::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(support_function(&u, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(support_function(&u, &[1.0, 0.0]).unwrap(), 1.0);
        assert!(support_function(&u, &[1.0]).is_err());
        let sym = Universe::new(1, vec![-1.0, 1.0]).unwrap();
        for z in [-2.5, 0.0, 0.7] {
            assert_eq!(support_function(&sym, &[z]).unwrap(), f64::abs(z));
        }
    }

    #[test]
    fn width_of_origin_is_zero() {
        let u = Universe::new(3, vec![0.0; 3]).unwrap();
        let w = gaussian_mean_width(&u, 500, 1).unwrap();
        assert_eq!(w.mean, 0.0);
        assert_eq!(w.std_error, 0.0);
    }

    #[test]
    fn width_of_symmetric_pair() {
        let u = Universe::new(1, vec![-1.0, 1.0]).unwrap();
        let w = gaussian_mean_width(&u, 100_000, 3).unwrap();
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        assert!((w.mean - exact).abs() <= 3.0 * w.std_error, "{w:?}");
    }

    #[test]
    fn width_is_reproducible() {
        let u = Universe::from_rows(&[vec![0.1, 0.9], vec![0.5, 0.2], vec![0.7, 0.7]]).unwrap();
        let a = gaussian_mean_width(&u, 5000, 11).unwrap();
        let b = gaussian_mean_width(&u, 5000, 11).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn width_shift_invariance() {
        let u = Universe::from_rows(&[vec![0.1, 0.9], vec![0.5, 0.2], vec![0.7, 0.7]]).unwrap();
        let shifted = u.translated(&[0.3, -0.2]).unwrap();
        let a = gaussian_mean_width(&u, 100_000, 5).unwrap();
        let b = gaussian_mean_width(&shifted, 100_000, 5).unwrap();
        assert!((a.mean - b.mean).abs() <= 3.0 * a.std_error.max(b.std_error));
    }

    #[test]
    fn dudley_singleton_and_pair() {
        let single = Universe::new(2, vec![0.3, 0.3]).unwrap();
        assert_eq!(coarse_dudley_bound(&single, 0.1).unwrap(), 0.0);

        let pair = Universe::new(1, vec![0.0, 0.5]).unwrap();
        // Largest lattice point below 0.5 is 2^(-5/4); Δ = 0.5.
        let t = 2f64.powf(-1.25);
        let expected = (4.0 * 0.5 / 0.1f64).ln() * t * 2f64.ln().sqrt();
        let got = coarse_dudley_bound(&pair, 0.1).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn dudley_monotone_in_alpha() {
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|i| vec![(i as f64 * 0.618).fract(), (i as f64 * 0.271).fract(), 0.5])
            .collect();
        let u = Universe::from_rows(&rows).unwrap();
        let mut prev = 0.0;
        for alpha in [0.9, 0.5, 0.3, 0.1, 0.05, 0.01] {
            let v = coarse_dudley_bound(&u, alpha).unwrap();
            assert!(v >= prev, "alpha {alpha}: {v} < {prev}");
            prev = v;
        }
    }
}
