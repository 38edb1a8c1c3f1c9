//! Dense row-major matrices and masked sequence batches, 64-bit floats.

use crate::error::{Error, Result};

/// Dense 2-D array, row-major, `rows x cols` (batch x features).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|v| v.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context.to_string()));
        }
        Ok(())
    }

    /// `self (m x k) * other (k x n)` with an ikj loop for cache locality.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T (k x m)^T * other (k x n)` -> m x n.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "matmul_tn {}x{} , {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self (m x k) * other^T (n x k)^T` -> m x n.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "matmul_nt {}x{} , {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..other.rows {
                let brow = &other.data[j * other.cols..(j + 1) * other.cols];
                let mut s = 0.0;
                for (a, b) in arow.iter().zip(brow) {
                    s += a * b;
                }
                out.data[i * other.rows + j] = s;
            }
        }
        Ok(out)
    }

    pub fn add_row_broadcast(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::Dimension("bias width mismatch".into()));
        }
        for r in 0..self.rows {
            for (v, b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Horizontal concatenation of two matrices with equal row counts.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension("hcat row mismatch".into()));
        }
        let mut out = Matrix::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            out.data[r * out.cols..r * out.cols + self.cols].copy_from_slice(self.row(r));
            out.data[r * out.cols + self.cols..(r + 1) * out.cols].copy_from_slice(other.row(r));
        }
        Ok(out)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (i, &r) in idx.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(r));
        }
        out
    }
}

/// 3-D batch of sequences (batch x steps x features) with a per-(sample, step)
/// presence mask. Masked steps carry recurrent state forward unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    batch: usize,
    steps: usize,
    features: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl SequenceBatch {
    pub fn zeros(batch: usize, steps: usize, features: usize) -> Self {
        SequenceBatch {
            batch,
            steps,
            features,
            data: vec![0.0; batch * steps * features],
            mask: vec![true; batch * steps],
        }
    }

    pub fn new(
        batch: usize,
        steps: usize,
        features: usize,
        data: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if data.len() != batch * steps * features || mask.len() != batch * steps {
            return Err(Error::Dimension("sequence batch size mismatch".into()));
        }
        if steps == 0 {
            return Err(Error::Dimension("sequence must have at least one step".into()));
        }
        // Step 0 must be present for every sample.
        for b in 0..batch {
            if !mask[b * steps] {
                return Err(Error::Parameter(format!("sample {b}: step 0 masked out")));
            }
        }
        Ok(SequenceBatch {
            batch,
            steps,
            features,
            data,
            mask,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn features(&self) -> usize {
        self.features
    }

    #[inline]
    pub fn get(&self, b: usize, t: usize, f: usize) -> f64 {
        self.data[(b * self.steps + t) * self.features + f]
    }

    #[inline]
    pub fn set(&mut self, b: usize, t: usize, f: usize, v: f64) {
        self.data[(b * self.steps + t) * self.features + f] = v;
    }

    #[inline]
    pub fn present(&self, b: usize, t: usize) -> bool {
        self.mask[b * self.steps + t]
    }

    pub fn set_present(&mut self, b: usize, t: usize, p: bool) {
        self.mask[b * self.steps + t] = p;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Copies step `t` of every sample into a (batch x features) matrix.
    pub fn step_matrix(&self, t: usize) -> Matrix {
        let mut out = Matrix::zeros(self.batch, self.features);
        for b in 0..self.batch {
            let src = (b * self.steps + t) * self.features;
            out.row_mut(b)
                .copy_from_slice(&self.data[src..src + self.features]);
        }
        out
    }

    pub fn set_step(&mut self, t: usize, m: &Matrix) {
        for b in 0..self.batch {
            let dst = (b * self.steps + t) * self.features;
            self.data[dst..dst + self.features].copy_from_slice(m.row(b));
        }
    }

    pub fn select_samples(&self, idx: &[usize]) -> SequenceBatch {
        let mut out = SequenceBatch::zeros(idx.len(), self.steps, self.features);
        for (i, &b) in idx.iter().enumerate() {
            let src = b * self.steps * self.features;
            let dst = i * self.steps * self.features;
            out.data[dst..dst + self.steps * self.features]
                .copy_from_slice(&self.data[src..src + self.steps * self.features]);
            for t in 0..self.steps {
                out.mask[i * self.steps + t] = self.mask[b * self.steps + t];
            }
        }
        out
    }
}
