//! Empirical error measurement and experiment orchestration.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, CONSTANT_CONVENTION, DEFAULT_C};
use crate::central::{
    chaining_mechanism, chaining_mechanism_linf, coarse_projection_mechanism, pmw_mechanism,
    projection_mechanism, Dataset, MechanismOutput, PmwConfig,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{gaussian_mean_width, Universe};
use crate::local::{local_chaining, local_coarse_projection, local_projection_protocol};
use crate::rng::{derive_seed, streams, trial_seed};

use super::generators::{gen_dataset, DatasetMode};

/// Accuracy used for bound evaluation when the mechanism has no `alpha`.
pub const DEFAULT_BOUND_ALPHA: f64 = 0.1;
/// Monte Carlo samples for the Gaussian width attached to projection reports.
pub const REPORT_WIDTH_SAMPLES: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum MechanismSpec {
    Projection { rho: f64 },
    CoarseProjection { rho: f64, alpha: f64 },
    Chaining { rho: f64, alpha: f64 },
    Pmw {
        rho: f64,
        #[serde(default)]
        pmw: PmwConfig,
    },
    ChainingLinf { rho: f64, alpha: f64 },
    LocalProjection { epsilon: f64 },
    LocalCoarseProjection { epsilon: f64, alpha: f64 },
    LocalChaining { epsilon: f64, alpha: f64 },
}

impl MechanismSpec {
    pub fn run(&self, d: &Dataset<'_>, seed: u64) -> Result<MechanismOutput> {
        match self {
            Self::Projection { rho } => projection_mechanism(d, *rho, seed),
            Self::CoarseProjection { rho, alpha } => coarse_projection_mechanism(d, *rho, *alpha, seed),
            Self::Chaining { rho, alpha } => chaining_mechanism(d, *rho, *alpha, seed),
            Self::Pmw { rho, pmw } => pmw_mechanism(d, *rho, pmw, seed),
            Self::ChainingLinf { rho, alpha } => chaining_mechanism_linf(d, *rho, *alpha, seed),
            Self::LocalProjection { epsilon } => local_projection_protocol(d, *epsilon, seed),
            Self::LocalCoarseProjection { epsilon, alpha } => local_coarse_projection(d, *epsilon, *alpha, seed),
            Self::LocalChaining { epsilon, alpha } => local_chaining(d, *epsilon, *alpha, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Projection { .. } => "projection",
            Self::CoarseProjection { .. } => "coarse_projection",
            Self::Chaining { .. } => "chaining",
            Self::Pmw { .. } => "pmw",
            Self::ChainingLinf { .. } => "chaining_linf",
            Self::LocalProjection { .. } => "local_projection",
            Self::LocalCoarseProjection { .. } => "local_coarse_projection",
            Self::LocalChaining { .. } => "local_chaining",
        }
    }

    pub fn is_local(&self) -> bool {
        matches!(
            self,
            Self::LocalProjection { .. } | Self::LocalCoarseProjection { .. } | Self::LocalChaining { .. }
        )
    }

    /// `rho` for central mechanisms, `epsilon` for local ones.
    pub fn budget_parameter(&self) -> f64 {
        match *self {
            Self::Projection { rho }
            | Self::CoarseProjection { rho, .. }
            | Self::Chaining { rho, .. }
            | Self::Pmw { rho, .. }
            | Self::ChainingLinf { rho, .. } => rho,
            Self::LocalProjection { epsilon }
            | Self::LocalCoarseProjection { epsilon, .. }
            | Self::LocalChaining { epsilon, .. } => epsilon,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Self::CoarseProjection { alpha, .. }
            | Self::Chaining { alpha, .. }
            | Self::ChainingLinf { alpha, .. }
            | Self::LocalCoarseProjection { alpha, .. }
            | Self::LocalChaining { alpha, .. } => Some(alpha),
            Self::Pmw { pmw, .. } => Some(pmw.alpha_target),
            Self::Projection { .. } | Self::LocalProjection { .. } => None,
        }
    }

    /// Same mechanism with its budget parameter replaced.
    pub fn with_budget(&self, value: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            Self::Projection { rho }
            | Self::CoarseProjection { rho, .. }
            | Self::Chaining { rho, .. }
            | Self::Pmw { rho, .. }
            | Self::ChainingLinf { rho, .. } => *rho = value,
            Self::LocalProjection { epsilon }
            | Self::LocalCoarseProjection { epsilon, .. }
            | Self::LocalChaining { epsilon, .. } => *epsilon = value,
        }
        s
    }
}

/// Errors of one trial against the dataset mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    /// `sqrt((1/m) ‖out − X̄‖²)`.
    pub err2: f64,
    /// `‖out − X̄‖_∞`.
    pub errinf: f64,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub seed: u64,
    pub error: String,
}

/// Aggregates over successful trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// `sqrt(mean err2²)`: the expectation sits inside the square root.
    pub err2_mean: f64,
    /// Sample standard deviation of the per-trial `err2`.
    pub err2_sd: f64,
    /// Delta-method standard error of `err2_mean`.
    pub err2_se: f64,
    pub errinf_mean: f64,
    pub errinf_sd: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl ErrorSummary {
    pub fn from_trials(trials: &[TrialRecord]) -> Result<Self> {
        if trials.is_empty() {
            return Err(invalid("trials", "no successful trial to aggregate"));
        }
        let err2: Vec<f64> = trials.iter().map(|t| t.err2).collect();
        let sq: Vec<f64> = err2.iter().map(|e| e * e).collect();
        let errinf: Vec<f64> = trials.iter().map(|t| t.errinf).collect();
        let err2_mean = mean(&sq).sqrt();
        let se_sq = sample_sd(&sq) / (sq.len() as f64).sqrt();
        let err2_se = if err2_mean > 0.0 { se_sq / (2.0 * err2_mean) } else { 0.0 };
        Ok(Self {
            err2_mean,
            err2_sd: sample_sd(&err2),
            err2_se,
            errinf_mean: mean(&errinf),
            errinf_sd: sample_sd(&errinf),
        })
    }
}

/// Errors of `estimate` against `target`: `(err2, errinf)`.
pub fn errors(estimate: &[f64], target: &[f64]) -> (f64, f64) {
    let m = target.len() as f64;
    let mut sq = 0.0;
    let mut inf: f64 = 0.0;
    for (a, b) in estimate.iter().zip(target) {
        let d = a - b;
        sq += d * d;
        inf = inf.max(d.abs());
    }
    ((sq / m).sqrt(), inf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub summary: ErrorSummary,
}

/// Runs `run(dataset, trial_seed)` for `trials` derived seeds in parallel and
/// aggregates the errors. The closure returns the estimate and whether it is
/// certified.
pub fn measure_with<F>(d: &Dataset<'_>, trials: usize, seed: u64, run: F) -> Result<Measurement>
where
    F: Fn(&Dataset<'_>, u64) -> Result<(Vec<f64>, bool)> + Sync,
{
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let target = d.mean();
    let outcomes: Vec<std::result::Result<TrialRecord, TrialFailure>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            match run(d, s) {
                Ok((est, certified)) if est.len() == target.len() => {
                    let (err2, errinf) = errors(&est, &target);
                    Ok(TrialRecord { seed: s, err2, errinf, certified })
                }
                Ok((est, _)) => Err(TrialFailure {
                    seed: s,
                    error: Error::DimensionMismatch { expected: target.len(), got: est.len() }.to_string(),
                }),
                Err(e) => Err(TrialFailure { seed: s, error: e.to_string() }),
            }
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let summary = ErrorSummary::from_trials(&records)
        .map_err(|_| failures.first().map_or_else(|| invalid("trials", "no trials"), |f| Error::Protocol(f.error.clone())))?;
    Ok(Measurement {
        trials: records,
        failures,
        summary,
    })
}

/// Sample-complexity estimates matched to a mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub convention: String,
    pub alpha: f64,
    pub upper_name: String,
    pub upper: f64,
    pub lower_name: String,
    pub lower: f64,
    /// Projection-mechanism error guarantee, for the projection mechanism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_error_bound: Option<f64>,
}

pub fn bound_summary(u: &Universe, spec: &MechanismSpec, n: usize, seed: u64) -> Result<BoundSummary> {
    let alpha = match spec.alpha() {
        Some(a) if a > 0.0 && a < 1.0 => a,
        _ => DEFAULT_BOUND_ALPHA,
    };
    let b = spec.budget_parameter();
    let (upper_name, upper) = match spec {
        MechanismSpec::Projection { .. } | MechanismSpec::CoarseProjection { .. } => {
            ("ub_coarse", bounds::ub_coarse(u, alpha, b, DEFAULT_C)?)
        }
        MechanismSpec::Chaining { .. } => ("ub_chain", bounds::ub_chain(u, alpha, b, DEFAULT_C)?),
        MechanismSpec::Pmw { .. } | MechanismSpec::ChainingLinf { .. } => {
            ("ub_infty", bounds::ub_infty(u, alpha, b, DEFAULT_C)?)
        }
        MechanismSpec::LocalProjection { .. } | MechanismSpec::LocalCoarseProjection { .. } => {
            ("ub_local_coarse", bounds::ub_local_coarse(u, alpha, b, DEFAULT_C)?)
        }
        MechanismSpec::LocalChaining { .. } => ("ub_local_chain", bounds::ub_local_chain(u, alpha, b, DEFAULT_C)?),
    };
    let (lower_name, lower) = if spec.is_local() {
        ("lb_local", bounds::lb_local(u, alpha, b)?)
    } else {
        ("lb_packing", bounds::lb_packing(u, alpha, b)?)
    };
    let projection_error_bound = match spec {
        MechanismSpec::Projection { rho } => {
            let g = gaussian_mean_width(u, REPORT_WIDTH_SAMPLES, derive_seed(seed, streams::WIDTH, 0))?;
            Some(bounds::projection_error_bound(u, g.mean, n, *rho)?)
        }
        _ => None,
    };
    Ok(BoundSummary {
        convention: CONSTANT_CONVENTION.to_string(),
        alpha,
        upper_name: upper_name.to_string(),
        upper,
        lower_name: lower_name.to_string(),
        lower,
        projection_error_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub mechanism: MechanismSpec,
    pub n: usize,
    pub m: usize,
    pub universe_size: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub uncertified: usize,
    pub err2_mean: f64,
    pub err2_sd: f64,
    pub err2_se: f64,
    pub errinf_mean: f64,
    pub errinf_sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundSummary>,
    /// Wall clock; excluded from [`RunReport::deterministic_json`].
    pub timing: Timing,
}

impl RunReport {
    /// JSON without the timing block: identical across runs with the same
    /// configuration and seed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Runs `spec` for `trials` derived seeds, aggregates the errors and, when
/// `with_bounds` is set, attaches the matching bound estimates.
pub fn measure_error(
    d: &Dataset<'_>,
    spec: &MechanismSpec,
    trials: usize,
    seed: u64,
    with_bounds: bool,
) -> Result<RunReport> {
    let start = Instant::now();
    let m = measure_with(d, trials, seed, |d, s| {
        let out = spec.run(d, s)?;
        Ok((out.estimate, out.certified))
    })?;
    let bounds = if with_bounds {
        Some(bound_summary(d.universe(), spec, d.n(), seed)?)
    } else {
        None
    };
    Ok(RunReport {
        config: RunConfig {
            mechanism: spec.clone(),
            n: d.n(),
            m: d.universe().dim(),
            universe_size: d.universe().len(),
            trials,
            seed,
        },
        uncertified: m.trials.iter().filter(|t| !t.certified).count(),
        trials: m.trials,
        failures: m.failures,
        err2_mean: m.summary.err2_mean,
        err2_sd: m.summary.err2_sd,
        err2_se: m.summary.err2_se,
        errinf_mean: m.summary.errinf_mean,
        errinf_sd: m.summary.errinf_sd,
        bounds,
        timing: Timing {
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// One row of the error-vs-n sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub universe: String,
    pub mechanism: String,
    pub n: usize,
    pub rho_or_eps: f64,
    pub alpha: Option<f64>,
    pub err2_mean: f64,
    pub err2_sd: f64,
    pub errinf_mean: f64,
    pub bound_ub: f64,
    pub bound_lb: f64,
    pub seed: u64,
}

pub const BENCH_HEADER: [&str; 11] = [
    "universe",
    "mechanism",
    "n",
    "rho_or_eps",
    "alpha",
    "err2_mean",
    "err2_sd",
    "errinf_mean",
    "bound_ub",
    "bound_lb",
    "seed",
];

/// For every `n` in the grid and every mechanism: draw a dataset, measure,
/// and record one row. Rows are ordered by `n`, then mechanism.
pub fn bench_sweep(
    universe_name: &str,
    u: &Universe,
    specs: &[MechanismSpec],
    n_grid: &[usize],
    mode: &DatasetMode,
    trials: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(n_grid.len() * specs.len());
    for &n in n_grid {
        let d = gen_dataset(u, n, mode, derive_seed(seed, streams::GENERATOR, n as u64))?;
        for spec in specs {
            let report = measure_error(&d, spec, trials, seed, true)?;
            let b = report.bounds.expect("bounds requested");
            rows.push(BenchRow {
                universe: universe_name.to_string(),
                mechanism: spec.name().to_string(),
                n,
                rho_or_eps: spec.budget_parameter(),
                alpha: spec.alpha(),
                err2_mean: report.err2_mean,
                err2_sd: report.err2_sd,
                errinf_mean: report.errinf_mean,
                bound_ub: b.upper,
                bound_lb: b.lower,
                seed,
            });
        }
    }
    Ok(rows)
}
