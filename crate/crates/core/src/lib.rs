//! Joint detection, tracking and classification of multiple targets with a
//! conditional labeled multi-Bernoulli (LMB) filter.
//!
//! The filter fuses radar position measurements and ESM bearing/class
//! declarations, and picks per-track class decisions by minimizing a Bayes
//! risk that combines classification, state-estimation and cardinality
//! costs. Two single-hypothesis baselines, the evaluation metrics and a
//! seeded Monte-Carlo harness complete the crate.

pub mod association;
pub mod baselines;
pub mod error;
pub mod filter;
pub mod kalman;
pub mod metrics;
pub mod montecarlo;
pub mod motion;
pub mod rfs;
pub mod risk;
pub mod scenario;
pub mod sensing;
pub mod tracker;

pub use error::{JdtcError, Result};
