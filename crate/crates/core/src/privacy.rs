//! Privacy accounting: budgets, composition, Gaussian calibration and the
//! per-run ledger.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{diameter, Norm, Universe};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrivacyBudget {
    Zcdp { rho: f64 },
    PureDp { epsilon: f64 },
    #[serde(alias = "ldp")]
    ApproxDp {
        epsilon: f64,
        #[serde(default)]
        delta: f64,
    },
}

impl PrivacyBudget {
    pub fn zcdp(rho: f64) -> Result<Self> {
        Self::Zcdp { rho }.validated()
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::PureDp { epsilon }.validated()
    }

    pub fn approx(epsilon: f64, delta: f64) -> Result<Self> {
        Self::ApproxDp { epsilon, delta }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        match self {
            Self::Zcdp { rho } if !ok(rho) => Err(invalid("rho", format!("{rho}"))),
            Self::PureDp { epsilon } if !ok(epsilon) => Err(invalid("epsilon", format!("{epsilon}"))),
            Self::ApproxDp { epsilon, .. } if !ok(epsilon) => {
                Err(invalid("epsilon", format!("{epsilon}")))
            }
            Self::ApproxDp { delta, .. } if !(0.0..1.0).contains(&delta) => {
                Err(invalid("delta", format!("must lie in [0, 1), got {delta}")))
            }
            b => Ok(b),
        }
    }

    pub fn is_zcdp(&self) -> bool {
        matches!(self, Self::Zcdp { .. })
    }

    /// `(epsilon, delta)` view of a pure or approximate DP budget.
    fn eps_delta(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Zcdp { .. } => None,
            Self::PureDp { epsilon } => Some((epsilon, 0.0)),
            Self::ApproxDp { epsilon, delta } => Some((epsilon, delta)),
        }
    }

    fn scaled(&self, f: f64) -> Self {
        match *self {
            Self::Zcdp { rho } => Self::Zcdp { rho: rho * f },
            Self::PureDp { epsilon } => Self::PureDp { epsilon: epsilon * f },
            Self::ApproxDp { epsilon, delta } => Self::ApproxDp {
                epsilon: epsilon * f,
                delta: delta * f,
            },
        }
    }

    /// Whether `self` spends no more than `limit` in every parameter.
    pub fn within(&self, limit: &PrivacyBudget) -> Result<bool> {
        match (self, limit) {
            (Self::Zcdp { rho: a }, Self::Zcdp { rho: b }) => Ok(a <= b),
            (Self::Zcdp { .. }, _) | (_, Self::Zcdp { .. }) => Err(Error::MixedBudgetKinds),
            _ => {
                let (e1, d1) = self.eps_delta().unwrap();
                let (e2, d2) = limit.eps_delta().unwrap();
                Ok(e1 <= e2 && d1 <= d2)
            }
        }
    }
}

impl fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zcdp { rho } => write!(f, "{rho}-zCDP"),
            Self::PureDp { epsilon } => write!(f, "{epsilon}-DP"),
            Self::ApproxDp { epsilon, delta } => write!(f, "({epsilon}, {delta})-DP"),
        }
    }
}

/// Correctly rounded sum (Shewchuk's algorithm).
pub(crate) fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Half-way correction, as in CPython's fsum.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Sequential composition: zCDP parameters add; for pure/approximate DP both
/// epsilon and delta add (pure DP counts as delta = 0).
pub fn compose(budgets: &[PrivacyBudget]) -> Result<PrivacyBudget> {
    let Some(first) = budgets.first() else {
        return Err(invalid("budgets", "nothing to compose"));
    };
    if first.is_zcdp() {
        let mut rhos = Vec::with_capacity(budgets.len());
        for b in budgets {
            match b.validated()? {
                PrivacyBudget::Zcdp { rho } => rhos.push(rho),
                _ => return Err(Error::MixedBudgetKinds),
            }
        }
        return Ok(PrivacyBudget::Zcdp { rho: exact_sum(rhos) });
    }
    let mut eps = Vec::with_capacity(budgets.len());
    let mut deltas = Vec::with_capacity(budgets.len());
    for b in budgets {
        let (e, d) = b.validated()?.eps_delta().ok_or(Error::MixedBudgetKinds)?;
        eps.push(e);
        deltas.push(d);
    }
    let all_pure = budgets.iter().all(|b| matches!(b, PrivacyBudget::PureDp { .. }));
    let epsilon = exact_sum(eps);
    if all_pure {
        Ok(PrivacyBudget::PureDp { epsilon })
    } else {
        PrivacyBudget::ApproxDp {
            epsilon,
            delta: exact_sum(deltas),
        }
        .validated()
    }
}

/// L2 sensitivity of the dataset mean under replacement of one element:
/// `diam(X) / n`.
pub fn mean_sensitivity(u: &Universe, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "dataset must be nonempty"));
    }
    Ok(diameter(u, Norm::L2) / n as f64)
}

/// Gaussian mechanism calibration for rho-zCDP: `sigma = s / sqrt(2 rho)`.
pub fn gaussian_sigma_for_zcdp(sensitivity: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid("rho", format!("must be positive, got {rho}")));
    }
    if !(sensitivity >= 0.0) {
        return Err(invalid("sensitivity", format!("must be nonnegative, got {sensitivity}")));
    }
    Ok(sensitivity / (2.0 * rho).sqrt())
}

/// rho-zCDP implies `(rho + 2 sqrt(rho ln(1/delta)), delta)`-DP.
pub fn zcdp_to_approx_dp(rho: f64, delta: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(invalid("rho", format!("must be nonnegative, got {rho}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub sensitivity: f64,
    pub budget: PrivacyBudget,
}

impl NoiseSpec {
    pub fn gaussian_zcdp(sensitivity: f64, rho: f64) -> Result<Self> {
        Ok(Self {
            sigma: gaussian_sigma_for_zcdp(sensitivity, rho)?,
            sensitivity,
            budget: PrivacyBudget::zcdp(rho)?,
        })
    }
}

/// A charge against a ledger: `budget` is what the noise was calibrated to,
/// and `share = num/den` records it as an exact fraction of the ledger limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub label: String,
    pub budget: PrivacyBudget,
    pub share: Option<(u64, u64)>,
}

/// Single-owner accountant for one mechanism run. Shares of the limit are
/// summed as exact fractions, so splitting `rho` into `k` equal parts
/// composes back to exactly `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    limit: PrivacyBudget,
    charges: Vec<Charge>,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl BudgetLedger {
    pub fn new(limit: PrivacyBudget) -> Result<Self> {
        Ok(Self {
            limit: limit.validated()?,
            charges: Vec::new(),
        })
    }

    pub fn limit(&self) -> PrivacyBudget {
        self.limit
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    /// Records `num/den` of the limit and returns the budget to calibrate to.
    pub fn charge_share(&mut self, label: impl Into<String>, num: u64, den: u64) -> Result<PrivacyBudget> {
        if den == 0 || num > den {
            return Err(invalid("share", format!("{num}/{den}")));
        }
        let budget = self.limit.scaled(num as f64 / den as f64);
        self.charges.push(Charge {
            label: label.into(),
            budget,
            share: Some((num, den)),
        });
        self.check()?;
        Ok(budget)
    }

    pub fn charge(&mut self, label: impl Into<String>, budget: PrivacyBudget) -> Result<()> {
        self.charges.push(Charge {
            label: label.into(),
            budget: budget.validated()?,
            share: None,
        });
        self.check()
    }

    /// Total consumed so far.
    pub fn consumed(&self) -> Result<PrivacyBudget> {
        let (mut num, mut den) = (0u128, 1u128);
        let mut other = Vec::new();
        for c in &self.charges {
            match c.share {
                Some((a, b)) => {
                    let (a, b) = (a as u128, b as u128);
                    num = num * b + a * den;
                    den *= b;
                    let g = gcd(num, den).max(1);
                    num /= g;
                    den /= g;
                }
                None => other.push(c.budget),
            }
        }
        let shares = if num == den {
            self.limit
        } else {
            self.limit.scaled(num as f64 / den as f64)
        };
        if other.is_empty() {
            return Ok(shares);
        }
        other.push(shares);
        compose(&other)
    }

    fn check(&self) -> Result<()> {
        let consumed = self.consumed()?;
        if !consumed.within(&self.limit)? {
            return Err(Error::BudgetExceeded {
                consumed: consumed.to_string(),
                limit: self.limit.to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sensitivity_examples() {
        let single = Universe::new(2, vec![0.4, 0.4]).unwrap();
        assert_eq!(mean_sensitivity(&single, 3).unwrap(), 0.0);
        let u = Universe::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!((mean_sensitivity(&u, 1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((mean_sensitivity(&u, 10).unwrap() - 2f64.sqrt() / 10.0).abs() < 1e-15);
        assert!(mean_sensitivity(&u, 0).is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(gaussian_sigma_for_zcdp(1.0, 0.5).unwrap(), 1.0);
        assert_eq!(gaussian_sigma_for_zcdp(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(gaussian_sigma_for_zcdp(2.0, 2.0).unwrap(), 1.0);
        assert!(gaussian_sigma_for_zcdp(1.0, 0.0).is_err());
        assert!(gaussian_sigma_for_zcdp(1.0, -1.0).is_err());
    }

    #[test]
    fn compose_examples() {
        let z = |rho| PrivacyBudget::Zcdp { rho };
        assert_eq!(compose(&[z(0.3), z(0.7)]).unwrap(), z(1.0));
        assert_eq!(compose(&[z(0.42), z(0.0)]).unwrap(), z(0.42));
        let mixed = compose(&[
            PrivacyBudget::PureDp { epsilon: 0.1 },
            PrivacyBudget::ApproxDp { epsilon: 0.2, delta: 1e-6 },
        ])
        .unwrap();
        match mixed {
            PrivacyBudget::ApproxDp { epsilon, delta } => {
                assert!((epsilon - 0.3).abs() < 1e-15);
                assert_eq!(delta, 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            compose(&[z(0.1), PrivacyBudget::PureDp { epsilon: 0.1 }]),
            Err(Error::MixedBudgetKinds)
        ));
    }

    #[test]
    fn conversion_examples() {
        assert_eq!(zcdp_to_approx_dp(0.0, 0.5).unwrap(), 0.0);
        assert!((zcdp_to_approx_dp(1.0, (-1f64).exp()).unwrap() - 3.0).abs() < 1e-12);
        assert!((zcdp_to_approx_dp(0.5, (-2f64).exp()).unwrap() - 2.5).abs() < 1e-12);
        assert!(zcdp_to_approx_dp(1.0, 0.0).is_err());
        assert!(zcdp_to_approx_dp(1.0, 1.0).is_err());
    }

    #[test]
    fn ledger_splits_are_exact() {
        for rho in [1.0, 0.3, 0.7, 1e-3, 123.456] {
            for k in 1..=13u64 {
                let mut ledger = BudgetLedger::new(PrivacyBudget::Zcdp { rho }).unwrap();
                for j in 0..k {
                    ledger.charge_share(format!("level {j}"), 1, k).unwrap();
                }
                assert_eq!(ledger.consumed().unwrap(), PrivacyBudget::Zcdp { rho });
            }
        }
    }

    #[test]
    fn ledger_refuses_overspend() {
        let mut ledger = BudgetLedger::new(PrivacyBudget::Zcdp { rho: 1.0 }).unwrap();
        ledger.charge_share("a", 2, 3).unwrap();
        assert!(matches!(
            ledger.charge_share("b", 2, 3),
            Err(Error::BudgetExceeded { .. })
        ));
        let mut ledger = BudgetLedger::new(PrivacyBudget::PureDp { epsilon: 1.0 }).unwrap();
        ledger.charge("x", PrivacyBudget::PureDp { epsilon: 0.6 }).unwrap();
        assert!(ledger.charge("y", PrivacyBudget::PureDp { epsilon: 0.6 }).is_err());
    }

    #[test]
    fn budget_serialization() {
        let b: PrivacyBudget = serde_json::from_str(r#"{"kind":"zcdp","rho":0.5}"#).unwrap();
        assert_eq!(b, PrivacyBudget::Zcdp { rho: 0.5 });
        let s = serde_json::to_string(&PrivacyBudget::ApproxDp { epsilon: 1.0, delta: 1e-5 }).unwrap();
        assert_eq!(s, r#"{"kind":"approx_dp","epsilon":1.0,"delta":0.00001}"#);
        let l: PrivacyBudget = serde_json::from_str(r#"{"kind":"ldp","epsilon":1.0,"delta":0.0}"#).unwrap();
        assert_eq!(l, PrivacyBudget::ApproxDp { epsilon: 1.0, delta: 0.0 });
    }

    fn rho_strategy() -> impl Strategy<Value = f64> {
        (0u32..10_000).prop_map(|x| x as f64 / 1000.0)
    }

    proptest! {
        #[test]
        fn compose_commutes_and_associates(a in rho_strategy(), b in rho_strategy(), c in rho_strategy()) {
            let z = |rho| PrivacyBudget::Zcdp { rho };
            let left = compose(&[compose(&[z(a), z(b)]).unwrap(), z(c)]).unwrap();
            let flat = compose(&[z(a), z(b), z(c)]).unwrap();
            let swapped = compose(&[z(c), z(a), z(b)]).unwrap();
            prop_assert_eq!(flat, swapped);
            if let (PrivacyBudget::Zcdp { rho: l }, PrivacyBudget::Zcdp { rho: f }) = (left, flat) {
                prop_assert!((l - f).abs() <= 1e-15 * f.max(1.0));
            }
            prop_assert_eq!(compose(&[z(a), z(0.0)]).unwrap(), z(a));
        }

        #[test]
        fn sigma_scaling(s in 0.01f64..10.0, rho in 0.01f64..10.0) {
            let base = gaussian_sigma_for_zcdp(s, rho).unwrap();
            let doubled = gaussian_sigma_for_zcdp(2.0 * s, rho).unwrap();
            let quartered = gaussian_sigma_for_zcdp(s, 4.0 * rho).unwrap();
            prop_assert!((doubled / base - 2.0).abs() < 1e-12);
            prop_assert!((quartered / base - 0.5).abs() < 1e-12);
        }

        #[test]
        fn conversion_monotone(rho in 0.0f64..5.0, d in 1e-9f64..0.5) {
            let e = zcdp_to_approx_dp(rho, d).unwrap();
            prop_assert!(zcdp_to_approx_dp(rho + 0.1, d).unwrap() > e);
            prop_assert!(zcdp_to_approx_dp(rho, d * 1.5).unwrap() <= e);
        }
    }
}
