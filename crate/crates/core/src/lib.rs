//! Unsupervised imaging-phenotype clustering.
//!
//! The pipeline runs five stages, each usable on its own:
//!
//! 1. [`features`]: resample masked volumes, z-normalize, discretize and
//!    extract intensity, shape and texture features.
//! 2. [`normalize`]: map raw feature columns to seven quantile codes.
//! 3. [`autoencoder`]: learn a 3-dimensional latent code with a SELU
//!    autoencoder trained by Adam on binary cross entropy.
//! 4. [`mixture`]: fit a Gaussian mixture whose component count is chosen by
//!    minimum message length with component annihilation.
//! 5. [`survival`]: evaluate the resulting clusters with Kaplan–Meier curves,
//!    log-rank tests, Cox models and Harrell's concordance.
//!
//! [`pipeline`] chains them over files, and can generate synthetic cohorts.
//! Survival outcomes are only read by the evaluation stage.

pub mod autoencoder;
pub mod error;
pub mod features;
pub mod matrix;
pub mod mixture;
pub mod normalize;
pub mod pipeline;
pub mod stats;
pub mod survival;

pub use error::{Error, Result};
pub use matrix::FeatureMatrix;
