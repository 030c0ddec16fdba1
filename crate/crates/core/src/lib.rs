//! Adaptive complexity-penalized hard thresholding for the multiresolution
//! Gaussian sequence model `y_jk = theta_jk + eps 2^{beta j} z_jk` that arises
//! from wavelet-vaguelette decompositions of homogeneous ill-posed operators.
//!
//! * [`model`]: sequences, Besov balls, noise descriptions, rate zones.
//! * [`penalty`]: the penalty family, thresholds, `nu` schedule and `M'_n`.
//! * [`estimator`]: monoscale and multiscale penalized estimators, the subset
//!   oracle and ideal risk.
//! * [`rates`]: control functions, rate exponents, critical indices and shell
//!   risk profiles.
//! * [`simulate`]: signal generators, correlated noise, Monte Carlo harness.
//! * [`config`]: the experiment configuration document.

// `!(x > 0.0)` is used deliberately so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimator;
pub mod model;
pub mod penalty;
pub mod rates;
pub mod serde_util;
pub mod simulate;

pub use error::{Error, Result};

/// Version tag embedded in every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
