//! Importance-sampling corrected estimators for approximate marginal MCMC.
//!
//! The crate is `no_std` (it needs `alloc`). Phase 1 samplers live in
//! [`mcmc`], proper weighting schemes in [`smc`], [`lgssm`] and
//! [`diffusion`], and the estimators that combine them in [`weighting`].

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diffusion;
pub mod error;
pub mod lgssm;
pub mod mcmc;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod smc;
pub mod weighting;

pub use error::{Error, Result};
pub use weighting::WeightedBatch;
