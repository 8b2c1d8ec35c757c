//! Bayesian spatio-temporal clustering engine for multivariate areal time series.
//!
//! The model places a product-partition prior over the regions of an areal map,
//! gives every cluster its own autoregressive temporal coefficients per disease,
//! and absorbs residual spatial structure through (multivariate) DAGAR random
//! effects. Posterior inference runs through a Metropolis-within-Gibbs sampler;
//! post-processing covers partition point estimation under the variation-of-
//! information loss, model-comparison criteria, and multi-step forecasting.

pub mod criteria;
pub mod dagar;
pub mod data;
pub mod error;
pub mod gibbs;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod partition;
pub mod synth;
pub mod temporal;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
