//! Private multiplicative weights over the universe, answering the `m`
//! coordinate queries.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_alpha_open, check_rho, run_levels, Dataset, MechanismOutput, StageTrace, SubMechanism};
use crate::error::{invalid, Result};
use crate::geometry::{chaining_decomposition, diameter, Norm};
use crate::privacy::{gaussian_sigma_for_zcdp, BudgetLedger, PrivacyBudget};
use crate::rng::rng_from_seed;

pub const DEFAULT_ALPHA_TARGET: f64 = 0.05;
pub const MAX_ROUNDS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmwConfig {
    /// Accuracy the default round count is tuned for.
    pub alpha_target: f64,
    /// Defaults to `min(ceil(4 ln|X| / alpha_target^2), 200)`.
    #[serde(default)]
    pub rounds: Option<usize>,
    /// Defaults to `1 / (2 Δ^2)` with `Δ` the largest absolute coordinate.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    /// Re-apply every past measurement after each new one.
    #[serde(default = "yes")]
    pub replay: bool,
}

fn yes() -> bool {
    true
}

impl Default for PmwConfig {
    fn default() -> Self {
        Self::with_alpha(DEFAULT_ALPHA_TARGET)
    }
}

impl PmwConfig {
    pub fn with_alpha(alpha_target: f64) -> Self {
        Self {
            alpha_target,
            rounds: None,
            learning_rate: None,
            replay: true,
        }
    }

    pub fn rounds_for(&self, universe_size: usize) -> usize {
        if let Some(t) = self.rounds {
            return t;
        }
        let ln = (universe_size.max(1) as f64).ln();
        let t = (4.0 * ln / (self.alpha_target * self.alpha_target)).ceil();
        (t as usize).clamp(1, MAX_ROUNDS)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha_target > 0.0) || !self.alpha_target.is_finite() {
            return Err(invalid("alpha_target", format!("must be positive, got {}", self.alpha_target)));
        }
        if self.rounds == Some(0) {
            return Err(invalid("rounds", "need at least one round"));
        }
        if let Some(eta) = self.learning_rate {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(invalid("learning_rate", format!("must be positive, got {eta}")));
            }
        }
        Ok(())
    }
}

struct Synthetic<'a> {
    points: &'a crate::geometry::Universe,
    log_w: Vec<f64>,
}

impl Synthetic<'_> {
    fn probabilities(&self) -> Vec<f64> {
        let top = self.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = self.log_w.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.points.dim()];
        for (w, x) in self.probabilities().iter().zip(self.points.rows()) {
            for (o, v) in out.iter_mut().zip(x) {
                *o += w * v;
            }
        }
        out
    }

    fn coordinate(&self, i: usize) -> f64 {
        self.probabilities()
            .iter()
            .zip(self.points.rows())
            .map(|(w, x)| w * x[i])
            .sum()
    }

    fn update(&mut self, i: usize, answer: f64, eta: f64) {
        let step = eta * (answer - self.coordinate(i));
        for (l, x) in self.log_w.iter_mut().zip(self.points.rows()) {
            *l += step * x[i];
        }
    }
}

pub(super) fn pmw_stage(
    d: &Dataset<'_>,
    rho: f64,
    config: &PmwConfig,
    seed: u64,
) -> Result<(Vec<f64>, StageTrace)> {
    config.validate()?;
    let u = d.universe();
    let m = u.dim();
    let rounds = config.rounds_for(u.len());
    let mut trace = StageTrace::new("pmw", PrivacyBudget::zcdp(rho)?, u.len());
    trace.rounds = Some(rounds);

    let bound = u.max_norm(Norm::LInf);
    if bound == 0.0 {
        return Ok((vec![0.0; m], trace));
    }
    let eta = config.learning_rate.unwrap_or(1.0 / (2.0 * bound * bound));
    let n = d.n() as f64;
    let rho_half = rho / (2 * rounds) as f64;
    let select_sigma = gaussian_sigma_for_zcdp(diameter(u, Norm::L2) / n, rho_half)?;
    let answer_sigmas: Vec<f64> = u
        .bounding_box()
        .iter()
        .map(|(lo, hi)| gaussian_sigma_for_zcdp((hi - lo) / n, rho_half))
        .collect::<Result<_>>()?;
    trace.sigma = Some(select_sigma);
    trace.answer_sigma = Some(answer_sigmas.iter().copied().fold(0.0, f64::max));

    let target = d.mean();
    let mut rng = rng_from_seed(seed);
    let mut synthetic = Synthetic {
        points: u,
        log_w: vec![0.0; u.len()],
    };
    let mut measured: Vec<(usize, f64)> = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let current = synthetic.mean();
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..m {
            let noisy = (target[i] - current[i] + select_sigma * rng.sample::<f64, _>(StandardNormal)).abs();
            if noisy > best.1 {
                best = (i, noisy);
            }
        }
        let i = best.0;
        let answer = target[i] + answer_sigmas[i] * rng.sample::<f64, _>(StandardNormal);
        measured.push((i, answer));
        if config.replay {
            for &(i, a) in &measured {
                synthetic.update(i, a, eta);
            }
        } else {
            synthetic.update(i, answer, eta);
        }
    }
    Ok((synthetic.mean(), trace))
}

/// Private multiplicative weights. Each of the `T` rounds spends `rho/(2T)`
/// on a Gaussian noisy-max selection of the worst coordinate and `rho/(2T)`
/// on a Gaussian answer for it.
pub fn pmw_mechanism(
    d: &Dataset<'_>,
    rho: f64,
    config: &PmwConfig,
    seed: u64,
) -> Result<MechanismOutput> {
    check_rho(rho)?;
    config.validate()?;
    let rounds = config.rounds_for(d.universe().len()) as u64;
    let mut ledger = BudgetLedger::new(PrivacyBudget::zcdp(rho)?)?;
    for t in 0..rounds {
        ledger.charge_share(format!("round {t} select"), 1, 2 * rounds)?;
        ledger.charge_share(format!("round {t} answer"), 1, 2 * rounds)?;
    }
    let (estimate, trace) = pmw_stage(d, rho, config, seed)?;
    MechanismOutput::assemble("pmw", estimate, ledger, vec![trace], seed)
}

/// Chaining with an L-infinity decomposition of a `[0,1]^m` universe and
/// private multiplicative weights on each level (`rho/k` each, accuracy
/// target `alpha/(2k)`).
pub fn chaining_mechanism_linf(
    d: &Dataset<'_>,
    rho: f64,
    alpha: f64,
    seed: u64,
) -> Result<MechanismOutput> {
    check_rho(rho)?;
    if alpha != 1.0 {
        check_alpha_open(alpha)?;
    }
    let u = d.universe();
    if !u.as_flat().iter().all(|v| (0.0..=1.0).contains(v)) {
        return Err(invalid("universe", "worst-case chaining needs points in [0,1]^m"));
    }
    let dec = chaining_decomposition(u, alpha, Norm::LInf, 1.0)?;
    let k = dec.k();
    let mut ledger = BudgetLedger::new(PrivacyBudget::zcdp(rho)?)?;
    let mut rhos = Vec::with_capacity(k);
    for j in 0..k {
        match ledger.charge_share(format!("level {j}"), 1, k as u64)? {
            PrivacyBudget::Zcdp { rho } => rhos.push(rho),
            _ => unreachable!("ledger limit is zCDP"),
        }
    }
    ledger.charge("remainder", PrivacyBudget::zcdp(0.0)?)?;
    let subs = vec![SubMechanism::Pmw(PmwConfig::with_alpha(alpha / (2 * k) as f64)); k];
    let (estimate, mut trace) = run_levels(d, &dec, &subs, &rhos, seed)?;
    trace.push(StageTrace::new("remainder", PrivacyBudget::zcdp(0.0)?, 0));
    MechanismOutput::assemble("chaining_linf", estimate, ledger, trace, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Universe;

    fn thresholds(m: usize) -> Universe {
        let rows: Vec<Vec<f64>> = (1..=m)
            .map(|x| (1..=m).map(|t| if x < t { 1.0 } else { 0.0 }).collect())
            .collect();
        Universe::from_rows(&rows).unwrap()
    }

    fn linf(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn default_rounds() {
        let c = PmwConfig::default();
        assert_eq!(c.rounds_for(1), 1);
        assert_eq!(c.rounds_for(64), MAX_ROUNDS);
        assert_eq!(PmwConfig::with_alpha(0.5).rounds_for(3), 18);
    }

    #[test]
    fn uniform_mean_is_a_fixed_point() {
        let u = thresholds(8);
        let d = Dataset::new(&u, (0..8).collect()).unwrap();
        let out = pmw_mechanism(&d, 1e9, &PmwConfig::default(), 4).unwrap();
        assert!(linf(&out.estimate, &d.mean()) < 1e-3);
    }

    #[test]
    fn single_round_spends_everything() {
        let u = thresholds(8);
        let d = Dataset::new(&u, vec![1, 2, 2]).unwrap();
        let config = PmwConfig {
            rounds: Some(1),
            ..PmwConfig::default()
        };
        let out = pmw_mechanism(&d, 0.3, &config, 4).unwrap();
        assert_eq!(out.budget_consumed, PrivacyBudget::Zcdp { rho: 0.3 });
    }

    #[test]
    fn zero_noise_converges_on_thresholds() {
        let u = thresholds(64);
        let d = Dataset::new(&u, (0..500).map(|i| (i * i) % 64).collect()).unwrap();
        let out = pmw_mechanism(&d, 1e12, &PmwConfig::default(), 1).unwrap();
        assert!(linf(&out.estimate, &d.mean()) <= 0.05);
    }

    #[test]
    fn linf_chaining_budget_and_floor() {
        let u = thresholds(16);
        let d = Dataset::new(&u, vec![0, 3, 3, 7, 15, 9]).unwrap();
        for &alpha in &[1.0, 0.5, 0.1] {
            let out = chaining_mechanism_linf(&d, 1e12, alpha, 3).unwrap();
            assert_eq!(out.budget_consumed, PrivacyBudget::Zcdp { rho: 1e12 });
            assert!(linf(&out.estimate, &d.mean()) <= alpha.min(0.5), "alpha {alpha}");
        }
    }

    #[test]
    fn linf_chaining_rejects_outside_cube() {
        let u = Universe::from_rows(&[[2.0], [0.0]]).unwrap();
        let d = Dataset::new(&u, vec![0]).unwrap();
        assert!(chaining_mechanism_linf(&d, 1.0, 0.5, 0).is_err());
    }
}
