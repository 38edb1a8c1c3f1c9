//! Inverted dropout.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::Rng;

/// Kept-entry mask recorded during a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub rate: f64,
}

/// Train-mode forward: zero each entry with probability `rate`, scale
/// survivors by 1/(1-rate). Inference is the identity (apply no dropout).
pub fn dropout_forward(x: &Matrix, rate: f64, rng: &mut impl Rng) -> Result<(Matrix, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate {rate} not in [0,1)")));
    }
    let keep: Vec<bool> = (0..x.rows() * x.cols())
        .map(|_| rng.gen::<f64>() >= rate)
        .collect();
    let mask = DropoutMask { keep, rate };
    Ok((dropout_apply_mask(x, &mask), mask))
}

/// Re-applies a recorded mask; used by the backward pass and by
/// finite-difference checks that need a fixed mask.
pub fn dropout_apply_mask(x: &Matrix, mask: &DropoutMask) -> Matrix {
    let scale = 1.0 / (1.0 - mask.rate);
    let mut y = x.clone();
    for (v, &k) in y.data_mut().iter_mut().zip(&mask.keep) {
        *v = if k { *v * scale } else { 0.0 };
    }
    y
}
