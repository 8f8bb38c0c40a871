//! Straight-Through gradient estimators for categorical latent variables.
//!
//! The crate is organised bottom-up:
//!
//! - [`simplex`]: softmax, Jacobians, categorical and Gumbel sampling,
//!   including the conditional `θ + G | D` sampler.
//! - [`estimators`]: ST, STGS, Gumbel-Rao, ReinMax, ReinMax-Argmax,
//!   ReinMax-Rao, ReinMax-CV and ReinMax-RK2(β), with the exact gradient and
//!   the first-order / second-order / RK2 reference approximations.
//! - [`nn`]: dense MLP forward/backward, losses and Adam/RAdam.
//! - [`vae`]: the discrete VAE and its training step.
//! - [`data`]: IDX parsing, synthetic data, checkpoints, metrics CSV.
//! - [`analysis`]: bias/variance measurement, sweeps and identity checks.

pub mod analysis;
pub mod data;
pub mod error;
pub mod estimators;
pub mod nn;
pub mod rng;
pub mod run;
pub mod simplex;
pub mod vae;

pub use error::{Error, Result};
