//! Local-model protocols under pure differential privacy.
//!
//! Every party sends a single message built from the randomizer
//! [`local_release`]; the server averages the messages of each level and
//! projects onto the level's convex hull. All three protocols are
//! non-interactive.

mod transcript;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::central::{chaining_delta, Dataset, MechanismOutput, StageTrace};
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    chaining_decomposition, greedy_separated_set, nearest_point_map, InsertionOrder, MetricKind,
    Norm, Universe,
};
use crate::privacy::{BudgetLedger, PrivacyBudget};
use crate::projection::{HullProjector, ProjectionConfig};
use crate::rng::{derive_seed, rng_from_seed, streams, Rng};

pub use transcript::{LocalMessage, Transcript};

/// Largest epsilon accepted without an explicit override.
pub const MAX_DEFAULT_EPSILON: f64 = 1.5;

/// Worst-case ratio between the conditional laws of the released sign under
/// two inputs: `(1 + ε/3) / (1 − ε/3)`.
pub fn density_ratio_bound(epsilon: f64) -> f64 {
    (1.0 + epsilon / 3.0) / (1.0 - epsilon / 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalReleaseParams {
    pub epsilon: f64,
    /// Radius of the L2 ball holding the inputs.
    pub radius: f64,
    #[serde(default)]
    pub allow_large_epsilon: bool,
}

impl LocalReleaseParams {
    pub fn new(epsilon: f64, radius: f64) -> Result<Self> {
        let p = Self {
            epsilon,
            radius,
            allow_large_epsilon: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon;
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(invalid("epsilon", format!("must be positive, got {eps}")));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(invalid("radius", format!("must be positive, got {}", self.radius)));
        }
        if eps > MAX_DEFAULT_EPSILON {
            if !self.allow_large_epsilon {
                return Err(invalid(
                    "epsilon",
                    format!("{eps} exceeds {MAX_DEFAULT_EPSILON}; set allow_large_epsilon to override"),
                ));
            }
            if eps >= 3.0 || density_ratio_bound(eps) > eps.exp() {
                return Err(invalid(
                    "epsilon",
                    format!("{eps} is too large for the sign channel to be {eps}-DP"),
                ));
            }
        }
        Ok(())
    }

    /// Scale applied to `Z S`: `(3/ε) sqrt(π/2)` times the radius, the
    /// reciprocal of `(ε/3) E|N(0,1)|`, which makes the release unbiased.
    pub fn magnitude(&self) -> f64 {
        3.0 / self.epsilon * (std::f64::consts::PI / 2.0).sqrt() * self.radius
    }
}

/// One draw of the unbiased randomizer `W_x`, using `rng`. Parameters are
/// assumed valid.
pub fn release_with(x: &[f64], params: &LocalReleaseParams, rng: &mut Rng) -> Result<Vec<f64>> {
    let r = Norm::L2.of(x) / params.radius;
    if r > 1.0 + 1e-9 {
        return Err(Error::OutsideBall {
            norm: r * params.radius,
            radius: params.radius,
        });
    }
    let r = r.min(1.0);
    let mut u: Vec<f64> = vec![0.0; x.len()];
    if r > 0.0 {
        let scale = 1.0 / (r * params.radius);
        u.iter_mut().zip(x).for_each(|(o, v)| *o = v * scale);
    } else if let Some(first) = u.first_mut() {
        *first = 1.0;
    }
    if !rng.random_bool((1.0 + r) / 2.0) {
        u.iter_mut().for_each(|v| *v = -*v);
    }
    let z: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let inner: f64 = z.iter().zip(&u).map(|(a, b)| a * b).sum();
    let bias = params.epsilon / 3.0 * if inner > 0.0 { 1.0 } else if inner < 0.0 { -1.0 } else { 0.0 };
    let s = if rng.random_bool((1.0 + bias) / 2.0) { 1.0 } else { -1.0 };
    let c = params.magnitude() * s;
    Ok(z.into_iter().map(|v| c * v).collect())
}

/// `W_x` drawn from its own seeded stream.
pub fn local_release(x: &[f64], params: &LocalReleaseParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    release_with(x, params, &mut rng_from_seed(seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Local projection.
    Lpm,
    /// Local coarse projection.
    Lcpm,
    /// Local chaining.
    Lcm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub protocol: ProtocolKind,
    pub epsilon: f64,
    /// Needed by the coarse and chaining protocols.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub allow_large_epsilon: bool,
}

impl ProtocolSpec {
    pub fn new(protocol: ProtocolKind, epsilon: f64, alpha: Option<f64>) -> Self {
        Self {
            protocol,
            epsilon,
            alpha,
            allow_large_epsilon: false,
        }
    }
}

/// One level of a protocol: a universe and the map sending each point of the
/// original universe to its row there.
struct Level {
    universe: Universe,
    map: Vec<usize>,
    radius: f64,
}

impl Level {
    fn new(universe: Universe, map: Vec<usize>) -> Self {
        let r = universe.max_norm(Norm::L2);
        Self {
            universe,
            map,
            radius: if r > 0.0 { r } else { 1.0 },
        }
    }
}

fn protocol_levels(u: &Universe, spec: &ProtocolSpec) -> Result<Vec<Level>> {
    let alpha = || {
        spec.alpha
            .ok_or_else(|| invalid("alpha", "required by the coarse and chaining protocols"))
    };
    match spec.protocol {
        ProtocolKind::Lpm => Ok(vec![Level::new(u.clone(), (0..u.len()).collect())]),
        ProtocolKind::Lcpm => {
            let a = alpha()?;
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid("alpha", format!("must lie in (0, 1), got {a}")));
            }
            let cover = greedy_separated_set(u, a / 2.0, MetricKind::NormalizedL2, InsertionOrder::Ascending)?;
            let centers = u.subset(&cover.indices)?;
            let map = nearest_point_map(u, &centers, Norm::L2)?;
            Ok(vec![Level::new(centers, map)])
        }
        ProtocolKind::Lcm => {
            let dec = chaining_decomposition(u, alpha()?, Norm::L2, chaining_delta(u))?;
            Ok(dec
                .levels
                .into_iter()
                .zip(dec.assignments)
                .map(|(l, a)| Level::new(l, a))
                .collect())
        }
    }
}

/// Everything a protocol run produced: the transcript (what privacy
/// protects), the server's per-level averages before projection, and the
/// final output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub transcript: Transcript,
    pub averages: Vec<Vec<f64>>,
    pub output: MechanismOutput,
}

/// Simulates `parties` (universe row indices, one per party) running the
/// protocol: each party releases one message per level with budget `ε/k`,
/// then the server averages and projects.
pub fn simulate_protocol(
    u: &Universe,
    parties: &[usize],
    spec: &ProtocolSpec,
    seed: u64,
) -> Result<ProtocolRun> {
    if parties.is_empty() {
        return Err(Error::Protocol("a protocol needs at least one party".into()));
    }
    if let Some(&bad) = parties.iter().find(|&&i| i >= u.len()) {
        return Err(Error::IndexOutOfRange { index: bad, len: u.len() });
    }
    LocalReleaseParams {
        epsilon: spec.epsilon,
        radius: 1.0,
        allow_large_epsilon: spec.allow_large_epsilon,
    }
    .validate()?;
    let levels = protocol_levels(u, spec)?;
    let k = levels.len();

    let mut ledger = BudgetLedger::new(PrivacyBudget::pure(spec.epsilon)?)?;
    let mut level_params = Vec::with_capacity(k);
    for (j, level) in levels.iter().enumerate() {
        let epsilon = match ledger.charge_share(format!("level {j}"), 1, k as u64)? {
            PrivacyBudget::PureDp { epsilon } => epsilon,
            _ => unreachable!("ledger limit is pure DP"),
        };
        level_params.push(LocalReleaseParams {
            epsilon,
            radius: level.radius,
            allow_large_epsilon: true,
        });
    }

    let messages: Vec<LocalMessage> = parties
        .par_iter()
        .enumerate()
        .map(|(party_id, &x)| {
            let mut rng = rng_from_seed(derive_seed(seed, streams::PARTY, party_id as u64));
            let payload = levels
                .iter()
                .zip(&level_params)
                .map(|(level, params)| release_with(level.universe.point(level.map[x]), params, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Ok(LocalMessage { party_id, payload })
        })
        .collect::<Result<_>>()?;
    let transcript = Transcript {
        spec: *spec,
        m: u.dim(),
        messages,
    };
    let (averages, output) = server(&transcript, &levels, ledger, seed)?;
    Ok(ProtocolRun {
        transcript,
        averages,
        output,
    })
}

fn server(
    transcript: &Transcript,
    levels: &[Level],
    ledger: BudgetLedger,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, MechanismOutput)> {
    let m = transcript.m;
    let n = transcript.messages.len() as f64;
    let mut averages = vec![vec![0.0; m]; levels.len()];
    for msg in &transcript.messages {
        if msg.payload.len() != levels.len() {
            return Err(Error::Protocol(format!(
                "party {} sent {} payloads for {} levels",
                msg.party_id,
                msg.payload.len(),
                levels.len()
            )));
        }
        for (avg, w) in averages.iter_mut().zip(&msg.payload) {
            if w.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: w.len() });
            }
            avg.iter_mut().zip(w).for_each(|(a, v)| *a += v);
        }
    }
    averages.iter_mut().flatten().for_each(|a| *a /= n);

    let mut estimate = vec![0.0; m];
    let mut trace = Vec::with_capacity(levels.len());
    for (j, (level, avg)) in levels.iter().zip(&averages).enumerate() {
        let result = HullProjector::new(&level.universe).project(avg, &ProjectionConfig::default())?;
        estimate.iter_mut().zip(&result.point).for_each(|(e, p)| *e += p);
        let mut t = StageTrace::new("local_projection", ledger.charges()[j].budget, level.universe.len());
        t.level = Some(j);
        t.gap = Some(result.gap);
        t.iterations = Some(result.iterations);
        t.certified = result.certified;
        trace.push(t);
    }
    if transcript.spec.protocol != ProtocolKind::Lpm {
        trace.push(StageTrace::new("remainder", PrivacyBudget::pure(0.0)?, 0));
    }
    let name = match transcript.spec.protocol {
        ProtocolKind::Lpm => "local_projection",
        ProtocolKind::Lcpm => "local_coarse_projection",
        ProtocolKind::Lcm => "local_chaining",
    };
    let output = MechanismOutput::assemble(name, estimate, ledger, trace, seed)?;
    Ok((averages, output))
}

/// Re-runs the server on a stored transcript.
pub fn replay_server(u: &Universe, transcript: &Transcript, seed: u64) -> Result<MechanismOutput> {
    let spec = transcript.spec;
    let levels = protocol_levels(u, &spec)?;
    let mut ledger = BudgetLedger::new(PrivacyBudget::pure(spec.epsilon)?)?;
    for j in 0..levels.len() {
        ledger.charge_share(format!("level {j}"), 1, levels.len() as u64)?;
    }
    Ok(server(transcript, &levels, ledger, seed)?.1)
}

pub fn local_projection_protocol(d: &Dataset<'_>, epsilon: f64, seed: u64) -> Result<MechanismOutput> {
    let spec = ProtocolSpec::new(ProtocolKind::Lpm, epsilon, None);
    Ok(simulate_protocol(d.universe(), d.indices(), &spec, seed)?.output)
}

pub fn local_coarse_projection(
    d: &Dataset<'_>,
    epsilon: f64,
    alpha: f64,
    seed: u64,
) -> Result<MechanismOutput> {
    let spec = ProtocolSpec::new(ProtocolKind::Lcpm, epsilon, Some(alpha));
    Ok(simulate_protocol(d.universe(), d.indices(), &spec, seed)?.output)
}

pub fn local_chaining(d: &Dataset<'_>, epsilon: f64, alpha: f64, seed: u64) -> Result<MechanismOutput> {
    let spec = ProtocolSpec::new(ProtocolKind::Lcm, epsilon, Some(alpha));
    Ok(simulate_protocol(d.universe(), d.indices(), &spec, seed)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::level_count;

    fn mean_of(samples: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; samples[0].len()];
        for s in samples {
            out.iter_mut().zip(s).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= samples.len() as f64);
        out
    }

    #[test]
    fn release_is_unbiased_in_one_dimension() {
        let params = LocalReleaseParams::new(1.0, 1.0).unwrap();
        let mut rng = rng_from_seed(5);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| release_with(&[1.0], &params, &mut rng).unwrap()).collect();
        let mean = mean_of(&draws)[0];
        let var = draws.iter().map(|d| (d[0] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 5.0 * se, "{mean} {se}");
    }

    #[test]
    fn zero_input_has_mean_zero() {
        let params = LocalReleaseParams::new(0.5, 2.0).unwrap();
        let mut rng = rng_from_seed(6);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| release_with(&[0.0, 0.0], &params, &mut rng).unwrap()).collect();
        let mean = mean_of(&draws);
        let sd = params.magnitude();
        for v in mean {
            assert!(v.abs() <= 5.0 * sd / (n as f64).sqrt());
        }
    }

    #[test]
    fn epsilon_range() {
        assert!(LocalReleaseParams::new(1.5, 1.0).is_ok());
        assert!(LocalReleaseParams::new(1.6, 1.0).is_err());
        let mut p = LocalReleaseParams::new(1.0, 1.0).unwrap();
        p.epsilon = 2.0;
        p.allow_large_epsilon = true;
        assert!(p.validate().is_ok());
        p.epsilon = 2.95;
        assert!(p.validate().is_err());
        for eps in [0.1, 0.5, 1.0, 1.5] {
            assert!(density_ratio_bound(eps) <= f64::exp(eps));
        }
    }

    #[test]
    fn rejects_inputs_outside_ball() {
        let params = LocalReleaseParams::new(1.0, 1.0).unwrap();
        assert!(matches!(local_release(&[0.8, 0.8], &params, 0), Err(Error::OutsideBall { .. })));
    }

    #[test]
    fn singleton_universe_is_exact() {
        let u = Universe::from_rows(&[[0.3, 0.4]]).unwrap();
        let d = Dataset::new(&u, vec![0; 1000]).unwrap();
        let out = local_projection_protocol(&d, 1.0, 2).unwrap();
        assert_eq!(out.estimate, vec![0.3, 0.4]);
    }

    #[test]
    fn ledgers_are_exact() {
        let u = Universe::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.4, 0.4]]).unwrap();
        let d = Dataset::new(&u, vec![0, 1, 2, 3, 3]).unwrap();
        for &alpha in &[1.0, 0.3, 0.07] {
            let out = local_chaining(&d, 0.9, alpha, 1).unwrap();
            assert_eq!(out.budget_consumed, PrivacyBudget::PureDp { epsilon: 0.9 });
            assert_eq!(out.ledger.charges().len(), level_count(alpha));
        }
        let out = local_coarse_projection(&d, 0.9, 0.3, 1).unwrap();
        assert_eq!(out.budget_consumed, PrivacyBudget::PureDp { epsilon: 0.9 });
    }

    #[test]
    fn coarse_with_tiny_alpha_matches_projection() {
        let u = Universe::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let d = Dataset::new(&u, vec![0, 1, 2, 2]).unwrap();
        let a = local_projection_protocol(&d, 1.0, 12).unwrap();
        let b = local_coarse_projection(&d, 1.0, 0.01, 12).unwrap();
        assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn transcript_shape_and_replay() {
        let u = Universe::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let parties = vec![0, 1, 2, 1, 0];
        let spec = ProtocolSpec::new(ProtocolKind::Lcm, 1.0, Some(0.2));
        let a = simulate_protocol(&u, &parties, &spec, 77).unwrap();
        let b = simulate_protocol(&u, &parties, &spec, 77).unwrap();
        assert_eq!(a.transcript.messages.len(), parties.len());
        assert_eq!(a, b);
        let replayed = replay_server(&u, &a.transcript, 77).unwrap();
        assert_eq!(replayed, a.output);
        assert!(simulate_protocol(&u, &[], &spec, 0).is_err());
    }
}
