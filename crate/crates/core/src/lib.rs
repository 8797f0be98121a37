//! Numerical laboratory for fractional derivatives of local times of
//! Gaussian processes with local nondeterminism (fractional, bifractional and
//! sub-fractional Brownian motion).
//!
//! Modules, bottom to top:
//! - [`cov_kernels`]: covariance families and two-time statistics,
//! - [`frac_calc`]: signed powers, Marchaud derivatives, heat-kernel derivatives,
//! - [`gp_sim`]: exact and circulant path simulation,
//! - [`local_time`]: Monte-Carlo regularized local-time derivatives,
//! - [`moment_engine`]: deterministic second moments and rate fits,
//! - [`slnd`]: local-nondeterminism diagnostics.

// `!(x > 0.0)` is used deliberately throughout so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cov_kernels;
pub mod error;
pub mod fit;
pub mod frac_calc;
pub mod gp_sim;
pub mod local_time;
pub mod moment_engine;
pub mod par;
pub mod quad;
pub mod report;
pub mod slnd;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
