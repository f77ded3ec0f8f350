//! Instance-adaptive private mechanisms for the mean point problem.
//!
//! A dataset is a multiset of points drawn from an explicit finite universe
//! `X ⊂ R^m`; the task is to release an estimate of its mean under
//! zero-concentrated differential privacy (central model) or pure local
//! differential privacy. The mechanisms adapt to the geometry of `X` through
//! covers and multi-scale chaining decompositions.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod central;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod local;
pub mod privacy;
pub mod projection;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Decomposition, MetricKind, Norm, Universe};
pub use central::{Dataset, MechanismOutput};
pub use privacy::{BudgetLedger, PrivacyBudget};

