//! Optimal-transport local particle filtering on periodic 1-D domains.
//!
//! The crate bundles the spectral test models, the baseline Kalman and
//! ensemble Kalman filters, exact and entropic transport solvers, the smooth
//! patch-based transport filter and the experiment harness used to compare
//! them.

pub mod error;
pub mod filters;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod ot;
pub mod rng;
pub mod spatial;

pub use error::{Error, Result};
