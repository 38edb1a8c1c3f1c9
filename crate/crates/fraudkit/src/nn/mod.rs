//! Minimal neural-network computation core.
//!
//! Forward and backward passes for dense, LSTM, batch-normalization, dropout
//! and activation layers, plus the Adam optimizer. Backward passes are
//! hand-derived per layer; there is no general autodiff graph.

mod activation;
mod adam;
mod batchnorm;
mod dense;
mod dropout;
mod init;
mod lstm;

pub use activation::{activation_backward, activation_forward, sigmoid, Activation};
pub use adam::{AdamHyper, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache};
pub use dense::{Dense, DenseGrads};
pub use dropout::{dropout_apply_mask, dropout_forward, DropoutMask};
pub use init::{glorot_uniform, GateInit};
pub use lstm::{Lstm, LstmCache, LstmGrads};

/// Clamp bound applied to sigmoid outputs before any `log` in the losses.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}
