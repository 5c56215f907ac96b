//! Intervention analysis for Poisson INAR count time series.
//!
//! Count series driven by integer-valued autoregression with binomial
//! thinning can be disturbed by innovation outliers (`delta = 0`),
//! geometrically decaying transient shifts (`0 < delta < 1`) and permanent
//! level shifts (`delta = 1`). This crate provides:
//!
//! * simulation of clean and contaminated INAR(p) paths with deterministic
//!   substream seeding ([`simulate`]),
//! * conditional least squares fits and the F-type statistic ([`cls`]),
//! * exact conditional likelihood machinery for the Poisson INAR model:
//!   transition probabilities, analytic score and Hessian, expected
//!   conditional information and CML fitting ([`cml`]),
//! * known-time tests, maximum statistics over candidate times and types,
//!   and approximate critical values ([`testing`]),
//! * a parametric bootstrap and the iterative detect-classify-correct
//!   pipeline ([`bootstrap`], [`detect`]),
//! * a Monte Carlo study runner for size/power/classification/critical-value
//!   tables ([`study`]),
//! * CSV/JSON ingestion and report plumbing used by the `inardet` binary
//!   ([`io`]).

pub mod bootstrap;
pub mod cli;
pub mod cls;
pub mod cml;
pub mod detect;
pub mod dist;
pub mod error;
pub mod io;
pub mod model;
pub mod rng;
pub mod scenarios;
pub mod series;
pub mod simulate;
pub mod study;
pub mod testing;

pub use error::{Error, Result};
pub use model::{CovariateMatrix, InarModel, Intervention, InterventionProfile, MeanSpec};
pub use rng::StreamKey;
pub use series::CountSeries;
