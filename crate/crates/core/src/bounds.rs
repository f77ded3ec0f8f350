//! Sample-complexity estimators built from separation-number profiles.
//!
//! Every hidden constant is set to 1 and logarithms are natural. The values
//! are meant for comparing shapes and trends (how a bound moves with `α`,
//! `ρ`, `ε` or the universe), never as certified sample sizes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{
    packing_profile, MetricKind, Norm, PackingMode, ProfilePoint, Universe, DEFAULT_EXACT_CAP,
};

/// Label attached to every report.
pub const CONSTANT_CONVENTION: &str = "constant=1 convention";
/// Default `C` in the `t >= α/C` threshold of the upper bounds.
pub const DEFAULT_C: f64 = 2.0;
/// Threshold multiple for the central packing lower bound (`t >= 4α`).
pub const LB_CENTRAL_FACTOR: f64 = 4.0;
/// Threshold multiple for the local packing lower bound (`t >= 6α`).
pub const LB_LOCAL_FACTOR: f64 = 6.0;

/// The four scale functionals the estimators take a supremum of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupTerm {
    /// `t · sqrt(ln P)`
    TSqrtLog,
    /// `t² · sqrt(ln P)`
    T2SqrtLog,
    /// `t² · ln P`
    T2Log,
    /// `t⁴ · ln P`
    T4Log,
}

impl SupTerm {
    pub const ALL: [SupTerm; 4] = [Self::TSqrtLog, Self::T2SqrtLog, Self::T2Log, Self::T4Log];

    pub fn eval(self, p: &ProfilePoint) -> f64 {
        let (t, l) = (p.t, p.log_packing);
        match self {
            Self::TSqrtLog => t * l.sqrt(),
            Self::T2SqrtLog => t * t * l.sqrt(),
            Self::T2Log => t * t * l,
            Self::T4Log => t.powi(4) * l,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupValue {
    pub term: SupTerm,
    pub value: f64,
    /// Grid scale attaining the value; `None` on an empty grid.
    pub argmax: Option<f64>,
}

/// Supremum of `term` over the profile points with `t >= t_min`.
pub fn sup_over(profile: &[ProfilePoint], term: SupTerm, t_min: f64) -> SupValue {
    let mut best = SupValue {
        term,
        value: 0.0,
        argmax: None,
    };
    for p in profile.iter().filter(|p| p.t >= t_min) {
        let v = term.eval(p);
        if best.argmax.is_none() || v > best.value {
            best.value = v;
            best.argmax = Some(p.t);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundProfile {
    pub metric: MetricKind,
    pub alpha: f64,
    pub c: f64,
    pub mode: PackingMode,
    pub grid: Vec<ProfilePoint>,
    pub sup_terms: Vec<SupValue>,
}

impl BoundProfile {
    pub fn sup(&self, term: SupTerm) -> f64 {
        self.sup_terms
            .iter()
            .find(|s| s.term == term)
            .map_or(0.0, |s| s.value)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn profile_with_mode(
    u: &Universe,
    metric: MetricKind,
    t_min: f64,
    mode: PackingMode,
    alpha: f64,
    c: f64,
) -> Result<BoundProfile> {
    let grid = packing_profile(u, metric, t_min, mode, DEFAULT_EXACT_CAP)?;
    let sup_terms = SupTerm::ALL.iter().map(|&term| sup_over(&grid, term, t_min)).collect();
    Ok(BoundProfile {
        metric,
        alpha,
        c,
        mode,
        grid,
        sup_terms,
    })
}

/// Greedy separation profile on the grid from `α/C` to the diameter, with
/// all four supremum terms.
pub fn bound_profile(u: &Universe, metric: MetricKind, alpha: f64, c: f64) -> Result<BoundProfile> {
    check_alpha(alpha)?;
    if !(c >= 1.0) || !c.is_finite() {
        return Err(invalid("C", format!("must be at least 1, got {c}")));
    }
    profile_with_mode(u, metric, alpha / c, PackingMode::Greedy, alpha, c)
}

fn ln_inv(alpha: f64) -> f64 {
    (1.0 / alpha).ln()
}

fn central_upper(
    u: &Universe,
    alpha: f64,
    rho: f64,
    c: f64,
    metric: MetricKind,
    term: SupTerm,
    log_power: f64,
) -> Result<f64> {
    check_positive("rho", rho)?;
    let profile = bound_profile(u, metric, alpha, c)?;
    Ok(ln_inv(alpha).powf(log_power) / (alpha * alpha * rho.sqrt()) * profile.sup(term))
}

/// `ln(1/α) / (α² sqrt ρ) · sup{ t sqrt(ln P(X, t)) : t >= α/C }`.
pub fn ub_coarse(u: &Universe, alpha: f64, rho: f64, c: f64) -> Result<f64> {
    central_upper(u, alpha, rho, c, MetricKind::NormalizedL2, SupTerm::TSqrtLog, 1.0)
}

/// `ln(1/α)^{5/2} / (α² sqrt ρ) · sup{ t² sqrt(ln P(X, t)) : t >= α/C }`.
pub fn ub_chain(u: &Universe, alpha: f64, rho: f64, c: f64) -> Result<f64> {
    central_upper(u, alpha, rho, c, MetricKind::NormalizedL2, SupTerm::T2SqrtLog, 2.5)
}

/// `ln(m) ln(1/α)^{5/2} / (α² sqrt ρ) · sup{ t² sqrt(ln P_∞(X, t)) : t >= α/C }`.
pub fn ub_infty(u: &Universe, alpha: f64, rho: f64, c: f64) -> Result<f64> {
    let base = central_upper(u, alpha, rho, c, MetricKind::LInf, SupTerm::T2SqrtLog, 2.5)?;
    Ok((u.dim() as f64).ln() * base)
}

fn local_upper(u: &Universe, alpha: f64, epsilon: f64, c: f64, term: SupTerm, log_power: i32) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    let profile = bound_profile(u, MetricKind::NormalizedL2, alpha, c)?;
    Ok(ln_inv(alpha).powi(log_power) / (alpha.powi(4) * epsilon * epsilon) * profile.sup(term))
}

/// `ln(1/α)² / (α⁴ ε²) · sup{ t² ln P(X, t) : t >= α/C }`.
pub fn ub_local_coarse(u: &Universe, alpha: f64, epsilon: f64, c: f64) -> Result<f64> {
    local_upper(u, alpha, epsilon, c, SupTerm::T2Log, 2)
}

/// `ln(1/α)⁶ / (α⁴ ε²) · sup{ t⁴ ln P(X, t) : t >= α/C }`.
pub fn ub_local_chain(u: &Universe, alpha: f64, epsilon: f64, c: f64) -> Result<f64> {
    local_upper(u, alpha, epsilon, c, SupTerm::T4Log, 6)
}

/// Exact separation numbers when the universe is small enough, greedy
/// (still a valid lower bound on the separation number) otherwise.
fn lower_profile(u: &Universe, alpha: f64, factor: f64) -> Result<(BoundProfile, bool)> {
    check_alpha(alpha)?;
    let exact = u.len() <= DEFAULT_EXACT_CAP;
    let mode = if exact { PackingMode::Exact } else { PackingMode::Greedy };
    let p = profile_with_mode(u, MetricKind::NormalizedL2, factor * alpha, mode, alpha, 1.0 / factor)?;
    Ok((p, exact))
}

/// `1 / (α sqrt ρ) · sup{ t sqrt(ln P(X, t)) : t >= 4α }`.
pub fn lb_packing(u: &Universe, alpha: f64, rho: f64) -> Result<f64> {
    check_positive("rho", rho)?;
    let (p, _) = lower_profile(u, alpha, LB_CENTRAL_FACTOR)?;
    Ok(p.sup(SupTerm::TSqrtLog) / (alpha * rho.sqrt()))
}

/// `1 / (α² ε²) · sup{ t² ln P(X, t) : t >= 6α }`.
pub fn lb_local(u: &Universe, alpha: f64, epsilon: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    let (p, _) = lower_profile(u, alpha, LB_LOCAL_FACTOR)?;
    Ok(p.sup(SupTerm::T2Log) / (alpha * alpha * epsilon * epsilon))
}

/// `α² ε³ / ln(|X| / ε)`, the largest `δ` the local lower bound covers
/// (with constant 1). `None` when the logarithm is not positive.
pub fn lb_local_delta_cap(u: &Universe, alpha: f64, epsilon: f64) -> Result<Option<f64>> {
    check_alpha(alpha)?;
    check_positive("epsilon", epsilon)?;
    let l = (u.len() as f64 / epsilon).ln();
    Ok((l > 0.0).then(|| alpha * alpha * epsilon.powi(3) / l))
}

/// The projection mechanism's error guarantee
/// `(Δ g(X) / (n sqrt(2 ρ m)))^{1/2}` with `Δ = max‖x‖₂ / sqrt(m)`.
pub fn projection_error_bound(u: &Universe, width: f64, n: usize, rho: f64) -> Result<f64> {
    check_positive("rho", rho)?;
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let m = u.dim() as f64;
    let delta = u.max_norm(Norm::L2) / m.sqrt();
    Ok((delta * width.max(0.0) / (n as f64 * (2.0 * rho * m).sqrt())).sqrt())
}

/// Everything the `bounds` report carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub convention: String,
    pub alpha: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub_coarse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub_chain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub_infty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lb_packing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub_local_coarse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub_local_chain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lb_local: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lb_local_delta_cap: Option<f64>,
    /// Lower bounds use exact separation numbers (small universes).
    pub lb_exact: bool,
    /// Upper-bound profiles come from greedy packings and are heuristic.
    pub ub_heuristic: bool,
    pub profile: BoundProfile,
}

/// Evaluates every estimator applicable to the given budgets.
pub fn bound_report(
    u: &Universe,
    alpha: f64,
    c: f64,
    rho: Option<f64>,
    epsilon: Option<f64>,
) -> Result<BoundReport> {
    let profile = bound_profile(u, MetricKind::NormalizedL2, alpha, c)?;
    let mut r = BoundReport {
        convention: CONSTANT_CONVENTION.to_string(),
        alpha,
        c,
        rho,
        epsilon,
        ub_coarse: None,
        ub_chain: None,
        ub_infty: None,
        lb_packing: None,
        ub_local_coarse: None,
        ub_local_chain: None,
        lb_local: None,
        lb_local_delta_cap: None,
        lb_exact: u.len() <= DEFAULT_EXACT_CAP,
        ub_heuristic: true,
        profile,
    };
    if let Some(rho) = rho {
        r.ub_coarse = Some(ub_coarse(u, alpha, rho, c)?);
        r.ub_chain = Some(ub_chain(u, alpha, rho, c)?);
        r.ub_infty = Some(ub_infty(u, alpha, rho, c)?);
        r.lb_packing = Some(lb_packing(u, alpha, rho)?);
    }
    if let Some(eps) = epsilon {
        r.ub_local_coarse = Some(ub_local_coarse(u, alpha, eps, c)?);
        r.ub_local_chain = Some(ub_local_chain(u, alpha, eps, c)?);
        r.lb_local = Some(lb_local(u, alpha, eps)?);
        r.lb_local_delta_cap = lb_local_delta_cap(u, alpha, eps)?;
    }
    Ok(r)
}
