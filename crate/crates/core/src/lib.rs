//! Simulation library for federated online clustering of contextual linear
//! bandits with cluster-level differential privacy.
//!
//! Layers, bottom up:
//!
//! - [`stats`]: ridge statistics, determinant ratios, confidence widths.
//! - [`privatizer`]: tree-based Gaussian mechanism.
//! - [`environment`] / [`ratings`]: ground truth, rewards, regret.
//! - [`federation`]: the phase-based federated protocol.
//! - [`baselines`]: comparison policies.
//! - [`harness`]: configuration, multi-seed runs, CSV output.

pub mod baselines;
pub mod environment;
pub mod error;
pub mod federation;
pub mod harness;
pub mod policy;
pub mod privatizer;
pub mod ratings;
pub mod rng;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
