//! Bayesian posteriors as weighted model ensembles, with frequentist
//! calibration of their predictive intervals.
//!
//! - [`gaussian`]: Cholesky, multivariate normal sampling, normal CDF/quantile.
//! - [`blr`]: conjugate Bayesian linear regression and predictive distributions.
//! - [`calibrator`]: 0-1 interval risk, quantile grid search and PAC slack.
//! - [`prior_quality`]: Monte Carlo estimates of average, worst-case and
//!   probabilistic coverage of a prior.
//! - [`simulation`]: naive versus calibrated interval studies.

pub mod blr;
pub mod calibrator;
pub mod error;
pub mod gaussian;
pub mod prior_quality;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use rng::RngStream;
