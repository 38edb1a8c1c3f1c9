//! Fully connected layer.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Dense layer parameters: weights `(in x out)` plus per-output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::Dimension("dense bias width mismatch".into()));
        }
        Ok(Dense { weights, bias })
    }

    pub fn in_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_width(&self) -> usize {
        self.weights.cols()
    }

    /// y = x W + b, bias broadcast over rows.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_width() {
            return Err(Error::Dimension(format!(
                "dense forward: input width {} != {}",
                x.cols(),
                self.in_width()
            )));
        }
        let mut y = x.matmul(&self.weights)?;
        y.add_row_broadcast(&self.bias)?;
        Ok(y)
    }

    /// Gradients given the cached forward input `x` and upstream `gy`.
    pub fn backward(&self, x: &Matrix, gy: &Matrix) -> Result<(Matrix, DenseGrads)> {
        if gy.cols() != self.out_width() || gy.rows() != x.rows() {
            return Err(Error::Dimension("dense backward shape mismatch".into()));
        }
        let gw = x.matmul_tn(gy)?;
        let mut gb = vec![0.0; self.out_width()];
        for r in 0..gy.rows() {
            for (b, g) in gb.iter_mut().zip(gy.row(r)) {
                *b += g;
            }
        }
        let gx = gy.matmul_nt(&self.weights)?;
        Ok((gx, DenseGrads { weights: gw, bias: gb }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_case() {
        let d = Dense::new(
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(d.forward(&x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn direct_substitution() {
        let d = Dense::new(Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap(), vec![0.5]).unwrap();
        let x = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        assert!((d.forward(&x).unwrap().get(0, 0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn random_matches_triple_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let (m, k, n) = (4, 5, 3);
        let x = Matrix::from_vec(m, k, (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let w = Matrix::from_vec(k, n, (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = Dense::new(w.clone(), b.clone()).unwrap();
        let y = d.forward(&x).unwrap();
        for i in 0..m {
            for j in 0..n {
                let mut s = b[j];
                for kk in 0..k {
                    s += x.get(i, kk) * w.get(kk, j);
                }
                assert!((y.get(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_chain_rule() {
        // y = w x : dL/dw = x * dL/dy
        let d = Dense::new(Matrix::from_vec(1, 1, vec![3.0]).unwrap(), vec![0.0]).unwrap();
        let x = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let gy = Matrix::from_vec(1, 1, vec![5.0]).unwrap();
        let (gx, grads) = d.backward(&x, &gy).unwrap();
        assert!((grads.weights.get(0, 0) - 10.0).abs() < 1e-15);
        assert!((gx.get(0, 0) - 15.0).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let d = Dense::new(Matrix::zeros(2, 1), vec![0.0]).unwrap();
        let x = Matrix::zeros(1, 3);
        assert!(d.forward(&x).is_err());
    }
}
