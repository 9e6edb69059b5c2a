//! Trajectory segmentation for noisy multivariate time series.
//!
//! The model treats an observed trajectory as the output of a linear
//! dynamical system whose dynamics matrix switches between a set of modes.
//! A hierarchical Dirichlet process prior (truncated to `L` modes, with a
//! sticky self-transition bias) lets the number of active modes be inferred
//! rather than fixed. Inference runs by Gibbs sampling: mode and state
//! sequences are resampled from their exact conditionals via discrete and
//! Gaussian message passing, and per-mode dynamics from their conjugate
//! matrix-normal inverse-Wishart posteriors.
//!
//! The crate is generic over the scalar type through the [`Real`] trait
//! (`f32` or `f64`); the `*64` aliases at the crate root cover the common
//! double-precision instantiation used by the CLI.

pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod hdp;
pub mod messages;
pub mod real;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::RngStream;

/// Double-precision model state.
pub type ModelState64 = gibbs::ModelState<f64>;
/// Double-precision chain result.
pub type ChainResult64 = gibbs::ChainResult<f64>;
/// Double-precision per-mode dynamics.
pub type DynParams64 = dynamics::DynParams<f64>;
/// Double-precision labeled trajectory.
pub type LabeledTrajectory64 = data::LabeledTrajectory<f64>;
