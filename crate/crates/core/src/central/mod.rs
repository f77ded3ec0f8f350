//! Central-model mechanisms under zCDP.
//!
//! Every mechanism takes a [`Dataset`] over an explicit universe, a budget and
//! a seed, and returns a [`MechanismOutput`] carrying the estimate, the
//! ledger that accounted for it and per-stage diagnostics.

mod dataset;
mod pmw;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    chaining_decomposition, greedy_separated_set, nearest_point_map, Decomposition,
    InsertionOrder, MetricKind, Norm, Universe,
};
use crate::privacy::{compose, gaussian_sigma_for_zcdp, mean_sensitivity, BudgetLedger, PrivacyBudget};
use crate::projection::{HullProjector, ProjectionConfig};
use crate::rng::{level_seed, rng_from_seed};

pub use dataset::Dataset;
pub use pmw::{chaining_mechanism_linf, pmw_mechanism, PmwConfig, DEFAULT_ALPHA_TARGET, MAX_ROUNDS};

/// Diagnostics for one stage (level, sub-mechanism) of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub budget: PrivacyBudget,
    /// Number of universe points the stage worked over.
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub certified: bool,
}

impl StageTrace {
    pub(crate) fn new(stage: &str, budget: PrivacyBudget, points: usize) -> Self {
        Self {
            stage: stage.to_string(),
            level: None,
            budget,
            points,
            sigma: None,
            answer_sigma: None,
            rounds: None,
            gap: None,
            iterations: None,
            certified: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutput {
    pub mechanism: String,
    pub estimate: Vec<f64>,
    pub budget_consumed: PrivacyBudget,
    pub ledger: BudgetLedger,
    pub trace: Vec<StageTrace>,
    pub seed: u64,
    /// False when some projection stopped before its optimality certificate.
    pub certified: bool,
}

impl MechanismOutput {
    pub(crate) fn assemble(
        mechanism: &str,
        estimate: Vec<f64>,
        ledger: BudgetLedger,
        trace: Vec<StageTrace>,
        seed: u64,
    ) -> Result<Self> {
        if estimate.iter().any(|v| !v.is_finite()) {
            return Err(invalid("estimate", "mechanism produced a non-finite value"));
        }
        let budget_consumed = ledger.consumed()?;
        let certified = trace.iter().all(|t| t.certified);
        Ok(Self {
            mechanism: mechanism.to_string(),
            estimate,
            budget_consumed,
            ledger,
            trace,
            seed,
            certified,
        })
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid("rho", format!("must be positive and finite, got {rho}")));
    }
    Ok(())
}

fn check_alpha_open(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Noisy mean followed by projection onto the hull; the core of every
/// projection-based stage.
fn projection_stage(d: &Dataset<'_>, rho: f64, seed: u64) -> Result<(Vec<f64>, StageTrace)> {
    let u = d.universe();
    let sensitivity = mean_sensitivity(u, d.n())?;
    let sigma = gaussian_sigma_for_zcdp(sensitivity, rho)?;
    let mut rng = rng_from_seed(seed);
    let noisy: Vec<f64> = d
        .mean()
        .into_iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let result = HullProjector::new(u).project(&noisy, &ProjectionConfig::default())?;
    let mut trace = StageTrace::new("projection", PrivacyBudget::zcdp(rho)?, u.len());
    trace.sigma = Some(sigma);
    trace.gap = Some(result.gap);
    trace.iterations = Some(result.iterations);
    trace.certified = result.certified;
    Ok((result.point, trace))
}

/// Gaussian noise on the mean, then Euclidean projection onto `conv(X)`.
pub fn projection_mechanism(d: &Dataset<'_>, rho: f64, seed: u64) -> Result<MechanismOutput> {
    check_rho(rho)?;
    let mut ledger = BudgetLedger::new(PrivacyBudget::zcdp(rho)?)?;
    ledger.charge_share("projection", 1, 1)?;
    let (estimate, trace) = projection_stage(d, rho, seed)?;
    MechanismOutput::assemble("projection", estimate, ledger, vec![trace], seed)
}

/// Rounds the data to a maximal `(α/2)`-separated subset (normalized L2) and
/// runs the projection mechanism over that subset with the full budget.
pub fn coarse_projection_mechanism(
    d: &Dataset<'_>,
    rho: f64,
    alpha: f64,
    seed: u64,
) -> Result<MechanismOutput> {
    check_rho(rho)?;
    check_alpha_open(alpha)?;
    let u = d.universe();
    let cover = greedy_separated_set(u, alpha / 2.0, MetricKind::NormalizedL2, InsertionOrder::Ascending)?;
    let centers = u.subset(&cover.indices)?;
    let map = nearest_point_map(u, &centers, Norm::L2)?;
    let rounded = Dataset::new(&centers, d.indices().iter().map(|&i| map[i]).collect())?;

    let mut ledger = BudgetLedger::new(PrivacyBudget::zcdp(rho)?)?;
    ledger.charge_share("projection", 1, 1)?;
    ledger.charge("remainder", PrivacyBudget::zcdp(0.0)?)?;
    let (estimate, mut trace) = projection_stage(&rounded, rho, seed)?;
    trace.level = Some(0);
    let remainder = StageTrace::new("remainder", PrivacyBudget::zcdp(0.0)?, 0);
    MechanismOutput::assemble("coarse_projection", estimate, ledger, vec![trace, remainder], seed)
}

/// Per-level sub-mechanism for [`decompose_and_run`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubMechanism {
    Projection,
    Pmw(PmwConfig),
    /// Releases the zero vector; costs nothing.
    Zero,
}

fn run_sub(
    sub: &SubMechanism,
    d: &Dataset<'_>,
    rho: f64,
    seed: u64,
) -> Result<(Vec<f64>, StageTrace)> {
    match sub {
        SubMechanism::Projection => projection_stage(d, rho, seed),
        SubMechanism::Pmw(config) => pmw::pmw_stage(d, rho, config, seed),
        SubMechanism::Zero => Ok((
            vec![0.0; d.universe().dim()],
            StageTrace::new("zero", PrivacyBudget::Zcdp { rho }, d.universe().len()),
        )),
    }
}

/// Runs one sub-mechanism per level on the induced datasets (in parallel,
/// each with its own level seed) and sums the results.
fn run_levels(
    d: &Dataset<'_>,
    dec: &Decomposition,
    subs: &[SubMechanism],
    rhos: &[f64],
    seed: u64,
) -> Result<(Vec<f64>, Vec<StageTrace>)> {
    if dec.assignments.iter().any(|a| a.len() != d.universe().len()) {
        return Err(invalid("decomposition", "assignments do not match the dataset's universe"));
    }
    let results: Vec<Result<(Vec<f64>, StageTrace)>> = (0..dec.k())
        .into_par_iter()
        .map(|j| {
            let induced = d.induced(&dec.levels[j], &dec.assignments[j])?;
            let (est, mut trace) = run_sub(&subs[j], &induced, rhos[j], level_seed(seed, j))?;
            trace.level = Some(j);
            Ok((est, trace))
        })
        .collect();
    let mut estimate = vec![0.0; d.universe().dim()];
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (est, trace) = r?;
        for (e, v) in estimate.iter_mut().zip(&est) {
            *e += v;
        }
        traces.push(trace);
    }
    Ok((estimate, traces))
}

fn check_levels(dec: &Decomposition, given: usize, what: &'static str) -> Result<()> {
    if dec.k() != given {
        return Err(Error::LevelMismatch {
            levels: dec.k(),
            given,
            what,
        });
    }
    Ok(())
}

/// Generic Minkowski-sum combinator: level `j` runs `subs[j]` with
/// `budgets[j]` on the dataset induced by the decomposition; the releases
/// are summed. Consumed budget is the composition of `budgets`.
pub fn decompose_and_run(
    d: &Dataset<'_>,
    dec: &Decomposition,
    subs: &[SubMechanism],
    budgets: &[PrivacyBudget],
    seed: u64,
) -> Result<MechanismOutput> {
    check_levels(dec, subs.len(), "sub-mechanisms")?;
    check_levels(dec, budgets.len(), "budgets")?;
    let mut rhos = Vec::with_capacity(budgets.len());
    for (sub, b) in subs.iter().zip(budgets) {
        match (sub, b.validated()?) {
            (SubMechanism::Zero, PrivacyBudget::Zcdp { rho }) => rhos.push(rho),
            (_, PrivacyBudget::Zcdp { rho }) => {
                check_rho(rho)?;
                rhos.push(rho);
            }
            _ => return Err(Error::MixedBudgetKinds),
        }
    }
    let mut ledger = BudgetLedger::new(compose(budgets)?)?;
    for (j, b) in budgets.iter().enumerate() {
        ledger.charge(format!("level {j}"), *b)?;
    }
    let (estimate, trace) = run_levels(d, dec, subs, &rhos, seed)?;
    MechanismOutput::assemble("decomposed", estimate, ledger, trace, seed)
}

/// Scale for the L2 chaining decomposition: `sqrt(m)`, widened when the
/// universe does not fit in the `sqrt(m)` ball.
pub fn chaining_delta(u: &Universe) -> f64 {
    let root_m = (u.dim() as f64).sqrt();
    root_m.max(u.max_norm(Norm::L2))
}

/// Chaining decomposition at accuracy `alpha`, the projection mechanism on
/// every level with `rho/k`, and the zero mechanism on the remainder ball.
pub fn chaining_mechanism(d: &Dataset<'_>, rho: f64, alpha: f64, seed: u64) -> Result<MechanismOutput> {
    check_rho(rho)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    let u = d.universe();
    let dec = chaining_decomposition(u, alpha, Norm::L2, chaining_delta(u))?;
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
    let subs = vec![SubMechanism::Projection; k];
    let (estimate, mut trace) = run_levels(d, &dec, &subs, &rhos, seed)?;
    trace.push(StageTrace::new("remainder", PrivacyBudget::zcdp(0.0)?, 0));
    MechanismOutput::assemble("chaining", estimate, ledger, trace, seed)
}
