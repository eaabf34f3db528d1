//! Reconstruct annual hydroclimate indices from palaeoclimate proxy archives.
//!
//! The library fits a Bayesian hierarchical state-space model in which the
//! index is a latent AR(1)-driven annual series observed directly during the
//! instrumental era and informed indirectly, through quadratic proxy response
//! curves with Laplace-shrunk coefficients, everywhere else. Inference runs
//! on a native Metropolis-within-Gibbs sampler with adaptive random-walk
//! steps and split-chain convergence diagnostics.
//!
//! The pieces, in pipeline order:
//!
//! * [`ingest`] — CSV loading, Box-Cox transform, z-scoring, alignment of
//!   lagged proxy records onto the instrumental calendar;
//! * [`filter`] — the range-overlap measure that screens proxies whose
//!   calibration span cannot speak for their pre-instrumental values;
//! * [`model`] — the joint density, priors, and a forward simulator;
//! * [`sampler`] — Gibbs blocks, chain driver, R-hat/ESS diagnostics;
//! * [`posterior`] — credible intervals, exceedance probabilities,
//!   back-transformed summaries;
//! * [`validation`] — oldest-block holdout scoring;
//! * [`pipeline`] — the glue the CLI and validation both run through.

pub mod dist;
pub mod error;
pub mod filter;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod posterior;
pub mod sampler;
pub mod validation;

pub use error::{Error, Result};
