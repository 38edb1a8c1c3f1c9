//! Elementwise activations.

use crate::error::Result;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation_forward(x: &Matrix, kind: Activation) -> Result<Matrix> {
    x.check_finite("activation input")?;
    Ok(match kind {
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Sigmoid => x.map(sigmoid),
    })
}

/// Gradient w.r.t. the activation input. `x` is the cached forward input,
/// `y` the cached forward output.
pub fn activation_backward(x: &Matrix, y: &Matrix, gy: &Matrix, kind: Activation) -> Matrix {
    let mut gx = gy.clone();
    match kind {
        Activation::Relu => {
            for (g, v) in gx.data_mut().iter_mut().zip(x.data()) {
                if *v <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for (g, s) in gx.data_mut().iter_mut().zip(y.data()) {
                *g *= s * (1.0 - s);
            }
        }
    }
    gx
}
