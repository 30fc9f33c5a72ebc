//! Exact support recovery of k-sparse binary vectors from generalized linear
//! measurements.
//!
//! - [`numerics`]: binary entropy, the normal CDF, reproducible random streams.
//! - [`model`]: signals, Gaussian designs, the linear / one-bit / logistic channels.
//! - [`decode`]: top-k correlation, exhaustive maximum likelihood, and the
//!   single-measurement binary-expansion decoder.
//! - [`bounds`]: closed-form sample-complexity thresholds.
//! - [`harness`]: Monte Carlo trials, sweeps, threshold search and moment checks.

pub mod bounds;
pub mod decode;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
