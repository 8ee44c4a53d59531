//! Survey-design-aware Bayesian geostatistical modelling of vaccination
//! coverage from cluster-level household-survey data, together with the
//! uncertainty-aware map products built on top of the posterior draws.
//!
//! The pipeline runs, in order:
//!
//! * [`survey_data`]: cluster observations, population rasters and
//!   population-proportional aggregation weights;
//! * [`spatial_field`]: a lattice GMRF approximation of a Matérn (ν = 1) field;
//! * [`coverage_models`]: the four likelihood classes and their inference targets;
//! * [`inference`]: the MCMC engine, diagnostics and the fitted-model file;
//! * [`prediction`]: cell-level coverage draws and area aggregation;
//! * [`presentation`]: summaries, exceedance, ranks, classified maps and rendering;
//! * [`simulator`]: synthetic truths and stratified two-stage PPS surveys;
//! * [`validation`]: WAIC and leave-one-state-out cross-validation.

pub mod coverage_models;
pub mod error;
pub mod inference;
pub mod linalg;
mod matrix_io;
pub mod prediction;
pub mod presentation;
pub mod rng;
pub mod simulator;
pub mod spatial_field;
pub mod stats;
pub mod survey_data;
pub mod validation;

pub use error::{Error, Result};
