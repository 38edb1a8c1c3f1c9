//! Weight initialization.

use crate::linalg::Matrix;
use rand::Rng;

/// Glorot-uniform initialization over a `(fan_in x fan_out)` matrix.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("consistent shape")
}

/// LSTM gate bias initialization: zeros except the forget gate, set to 1.0.
pub struct GateInit;

impl GateInit {
    pub fn lstm_bias(hidden: usize) -> Vec<f64> {
        let mut b = vec![0.0; 4 * hidden];
        for v in &mut b[hidden..2 * hidden] {
            *v = 1.0;
        }
        b
    }
}
