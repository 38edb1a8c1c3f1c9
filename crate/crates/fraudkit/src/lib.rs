//! Desk-scale medicare fraud detection toolkit.
//!
//! Provides a small neural-network training engine with imbalance-aware loss
//! functions, a claims feature pipeline with quarterly bucketing, a two-branch
//! classifier built around an LSTM autoencoder of provider behavior, PR-curve
//! based evaluation with G-mean threshold selection, mean-shift clustering of
//! latent vectors, and a deterministic synthetic claims generator.

pub mod checkpoint;
pub mod clustering;
pub mod config;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
