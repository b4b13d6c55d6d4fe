//! Bayesian hierarchical negative-binomial models for run-off triangles of
//! delayed surveillance counts, fitted by adaptive Metropolis-within-Gibbs,
//! with posterior predictive nowcasts, information criteria and a simulator.

pub mod error;
pub mod rng;
pub mod triangle;

pub use error::{NowcastError, Result};
pub mod inference;
pub mod model;
pub mod nowcast;
pub mod selection;
pub mod simulator;
pub mod spatial;
