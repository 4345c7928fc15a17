//! Peaks-over-threshold extreme-value analysis.
//!
//! The crate estimates the extremal index (reciprocal mean cluster size of
//! threshold exceedances) by maximum likelihood on K-gaps — inter-exceedance
//! times truncated by a run parameter `K` and normalized by the empirical
//! tail probability — and diagnoses misspecification of the threshold, the
//! run parameter, or the stationarity assumption with an information-matrix
//! test whose statistic is asymptotically chi-squared with one degree of
//! freedom under a well-specified model.
//!
//! Modules:
//!
//! - [`series`]: time-series containers, empirical quantiles, exceedance
//!   records, inter-exceedance times, K-gaps, runs declustering, and the
//!   deseasonalize/detrend preprocessing pipeline.
//! - [`kgaps`]: the K-gaps log-likelihood, its closed-form maximum-likelihood
//!   estimator with sandwich standard errors, a locally-weighted variant,
//!   the intervals estimator, and bootstrap intervals.
//! - [`imt`]: the information-matrix misspecification test, evaluated
//!   pointwise, over threshold/run-parameter grids, and over sliding time
//!   windows with Benjamini–Yekutieli FDR control.
//! - [`gpd`]: generalized Pareto fitting to declustered peak excesses,
//!   threshold diagnostics, and return-level/return-period computation.
//! - [`simulate`]: seedable generators for the dependent study processes and
//!   exact samplers for the limiting models, plus a Monte Carlo benchmark
//!   harness.
//!
//! Batch computations (grid cells, windows, bootstrap and Monte Carlo
//! replicates) run data-parallel on rayon when the default `parallel`
//! feature is enabled, and fall back to sequential iteration without it.
//! Results are identical either way.

pub mod error;
mod exec;
pub mod gpd;
pub mod imt;
pub mod kgaps;
pub mod series;
pub mod simulate;

pub use error::{Error, Result};
