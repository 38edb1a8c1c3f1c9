//! Batch normalization with train/infer modes.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Cached train-mode forward state needed for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Matrix,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(width: usize, momentum: f64, epsilon: f64) -> Result<Self> {
        if !(0.0 < momentum && momentum < 1.0) {
            return Err(Error::Parameter("batchnorm momentum must be in (0,1)".into()));
        }
        if epsilon <= 0.0 {
            return Err(Error::Parameter("batchnorm epsilon must be positive".into()));
        }
        Ok(BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum,
            epsilon,
        })
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Train-mode forward: normalize by batch statistics. Does not touch the
    /// running statistics; call [`BatchNorm::update_running`] with the cache.
    pub fn forward_train(&self, x: &Matrix) -> Result<(Matrix, BatchNormCache)> {
        if x.cols() != self.width() {
            return Err(Error::Dimension("batchnorm width mismatch".into()));
        }
        if x.rows() < 2 {
            return Err(Error::DegenerateBatch(
                "batchnorm train mode needs batch >= 2".into(),
            ));
        }
        let n = x.rows() as f64;
        let w = self.width();
        let mut mean = vec![0.0; w];
        for r in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; w];
        for r in 0..x.rows() {
            for c in 0..w {
                let d = x.get(r, c) - mean[c];
                var[c] += d * d;
            }
        }
        for v in &mut var {
            *v /= n;
        }
        let mut x_hat = Matrix::zeros(x.rows(), w);
        let mut y = Matrix::zeros(x.rows(), w);
        for r in 0..x.rows() {
            for c in 0..w {
                let h = (x.get(r, c) - mean[c]) / (var[c] + self.epsilon).sqrt();
                x_hat.set(r, c, h);
                y.set(r, c, self.gamma[c] * h + self.beta[c]);
            }
        }
        Ok((
            y,
            BatchNormCache {
                x_hat,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    /// Exponential moving-average update of the running statistics.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        for c in 0..self.width() {
            self.running_mean[c] =
                self.momentum * self.running_mean[c] + (1.0 - self.momentum) * cache.batch_mean[c];
            self.running_var[c] =
                self.momentum * self.running_var[c] + (1.0 - self.momentum) * cache.batch_var[c];
        }
    }

    /// Inference-mode forward using the running statistics; row-wise independent.
    pub fn forward_infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::Dimension("batchnorm width mismatch".into()));
        }
        let mut y = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let h = (x.get(r, c) - self.running_mean[c])
                    / (self.running_var[c] + self.epsilon).sqrt();
                y.set(r, c, self.gamma[c] * h + self.beta[c]);
            }
        }
        Ok(y)
    }

    /// Backward through the train-mode normalization.
    /// Returns (dL/dx, dL/dgamma, dL/dbeta).
    pub fn backward(
        &self,
        cache: &BatchNormCache,
        gy: &Matrix,
    ) -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
        let w = self.width();
        if gy.cols() != w {
            return Err(Error::Dimension("batchnorm backward width mismatch".into()));
        }
        let n = gy.rows() as f64;
        let mut g_gamma = vec![0.0; w];
        let mut g_beta = vec![0.0; w];
        for r in 0..gy.rows() {
            for c in 0..w {
                g_gamma[c] += gy.get(r, c) * cache.x_hat.get(r, c);
                g_beta[c] += gy.get(r, c);
            }
        }
        // dL/dx = gamma/sqrt(var+eps) * (g - mean(g) - x_hat * mean(g*x_hat))
        let mut gx = Matrix::zeros(gy.rows(), w);
        for c in 0..w {
            let inv_std = 1.0 / (cache.batch_var[c] + self.epsilon).sqrt();
            let mean_g = g_beta[c] / n;
            let mean_gx = g_gamma[c] / n;
            for r in 0..gy.rows() {
                let g = gy.get(r, c);
                let v = self.gamma[c] * inv_std * (g - mean_g - cache.x_hat.get(r, c) * mean_gx);
                gx.set(r, c, v);
            }
        }
        Ok((gx, g_gamma, g_beta))
    }
}
