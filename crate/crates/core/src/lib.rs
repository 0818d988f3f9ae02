//! Glider anomaly detection from sparse surfacing fixes.
//!
//! An adaptive observer jointly estimates the glider's through-water speed and
//! a low-order ocean flow model. Speed estimates leaving a configured band are
//! reported as anomalies.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_io;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod flow_field;
pub mod harness;
pub mod simulator;

pub use error::{Error, Result};
