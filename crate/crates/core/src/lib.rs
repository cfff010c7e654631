//! Sequential detection of sparse mean shifts across many data streams.
//!
//! Each stream runs a CUSUM or window-limited GLR statistic, the statistics
//! are turned into P-values, and Higher Criticism combines the P-values into
//! one stopping rule. Baseline combiners, threshold calibration, theoretical
//! delay limits and a Monte Carlo harness sit alongside.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod calibration;
pub mod detector;
pub mod error;
pub mod harness;
pub mod hc_detector;
pub mod model;
pub mod pvalue;
pub mod rng;
pub mod stream_stats;
pub mod theory;

pub use error::{Error, Result};
