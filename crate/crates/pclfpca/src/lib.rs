//! Bayesian functional PCA with per-dimension clustering of score vectors.
//!
//! Pipeline: load or simulate curves ([`dataset`], [`simulation`]), smooth
//! with B-splines ([`bspline`]), decompose ([`fpca`]), sample the posterior
//! ([`model`], [`sampler`]), persist draws ([`draws`]), then summarize
//! ([`diagnostics`], [`reconstruction`], [`metrics`]).

pub mod bspline;
pub mod dataset;
pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod fpca;
pub mod metrics;
pub mod model;
pub mod reconstruction;
pub mod sampler;
pub mod simulation;

pub use error::{Error, Result};
