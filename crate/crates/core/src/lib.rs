//! Multi-target tracking with random finite sets.
//!
//! Provides a multiple-model Gaussian-mixture CPHD tracker, a CPHD estimator of
//! the clutter rate and detection probability, the bootstrap loop feeding the
//! estimates into the tracker, OSPA-family metrics and a scenario simulator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod cardinality;
pub mod cphd;
pub mod error;
pub mod lambda_cphd;
pub mod metrics;
mod mixture;
pub mod models;
pub mod numerics;
pub(crate) mod serde_matrix;
pub mod simulator;

pub use error::{Error, Result};
pub use mixture::ReductionParams;
