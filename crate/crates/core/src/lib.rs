//! Peaks-over-threshold extreme-value analysis of arrival-count streams.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`ingest`]: load series, block maxima, threshold excesses, ECDF
//! - [`distributions`]: GPD, GEV and Normal CDFs, quantiles, samplers
//! - [`estimation`]: PWM and ML fitting, threshold selection
//! - [`gof`]: Anderson-Darling statistic, bootstrap p-values, sup-norm gaps
//! - [`bootstrap`]: parametric bootstrap envelopes and accuracy tables
//! - [`risk`]: exceedance and over-capacity probabilities, triage flag
//! - [`cli`]: the `coreflow` command-line surface and its reports

pub mod bootstrap;
pub mod cli;
pub mod distributions;
pub mod estimation;
pub mod gof;
pub mod ingest;
pub mod risk;
pub mod rng;

mod optimize;
