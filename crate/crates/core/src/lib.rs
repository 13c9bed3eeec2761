//! Forecast combination via linear pooling with stacked Gibbs-posterior
//! weights.
//!
//! The library covers the full ensemble workflow:
//!
//! - [`dist`]: candidate forecast distributions (Gaussian, empirical sample
//!   sets, piecewise CDFs reconstructed from quantiles) and their linear
//!   pools.
//! - [`scoring`]: proper scoring rules — CRPS in closed form, Monte-Carlo
//!   form, and a numeric-quadrature oracle; the log score; interval score
//!   and WIS for quantile-format forecasts.
//! - [`risk`]: empirical risk of a candidate weight vector (i.i.d. mean
//!   CRPS, or geometrically discounted in time).
//! - [`sgp`]: the stacked Gibbs posterior over the weight simplex — the
//!   unnormalized log density, an adaptive random-walk Metropolis sampler
//!   on an unconstrained reparameterization, convergence diagnostics,
//!   learning-rate tuning, and a direct risk-minimizer oracle.
//! - [`baselines`]: BMA, AVS, and equal-weight ensembles.
//! - [`calibration`]: PIT series, PIT histograms, and the 1-Wasserstein
//!   distance of the PIT to uniformity.
//! - [`simkit`]: data generators and drivers for the three simulation
//!   studies, plus a synthetic hub-archive generator.
//! - [`hub`]: ingestion of hub-format quantile submissions and the weekly
//!   dynamic-ensemble pipeline.

pub mod baselines;
pub mod calibration;
pub mod dist;
mod error;
pub mod hub;
pub mod math;
pub mod risk;
pub mod scoring;
pub mod sgp;
pub mod simkit;

pub use dist::{ComponentForecast, LinearPool, SimplexWeights};
pub use error::{Error, Result};
