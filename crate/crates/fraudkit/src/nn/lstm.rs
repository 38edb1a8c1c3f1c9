//! LSTM layer with full backpropagation through time and per-sample step masks.
//!
//! Gate order is fixed as [input, forget, cell, output]. Masked steps copy the
//! previous (h, c) forward unchanged and contribute no parameter gradients.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SequenceBatch};
use crate::nn::activation::sigmoid;

/// LSTM parameters: input weights `W (F x 4H)`, recurrent weights `U (H x 4H)`
/// and bias `b (4H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

/// Per-step forward state cached for BPTT.
pub struct LstmCache {
    // gate activations and cell states per step, each (B x H)
    i: Vec<Matrix>,
    f: Vec<Matrix>,
    g: Vec<Matrix>,
    o: Vec<Matrix>,
    tanh_c: Vec<Matrix>,
    // hs[t] / cs[t] = state *entering* step t; length T+1
    hs: Vec<Matrix>,
    cs: Vec<Matrix>,
    mask: Vec<bool>,
    batch: usize,
    steps: usize,
}

impl Lstm {
    pub fn new(w: Matrix, u: Matrix, b: Vec<f64>) -> Result<Self> {
        let hidden = u.rows();
        if w.cols() != 4 * hidden || u.cols() != 4 * hidden || b.len() != 4 * hidden {
            return Err(Error::Dimension("lstm parameter shapes inconsistent".into()));
        }
        Ok(Lstm { w, u, b, hidden })
    }

    pub fn input_width(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    /// Runs the recurrence over a masked sequence batch. Returns the cache,
    /// all hidden states (masked steps repeat the carried state) and the
    /// final hidden state.
    pub fn forward(&self, seq: &SequenceBatch) -> Result<(LstmCache, SequenceBatch, Matrix)> {
        if seq.features() != self.input_width() {
            return Err(Error::Dimension(format!(
                "lstm forward: input width {} != {}",
                seq.features(),
                self.input_width()
            )));
        }
        let (bsz, steps, h) = (seq.batch(), seq.steps(), self.hidden);
        let mut cache = LstmCache {
            i: Vec::with_capacity(steps),
            f: Vec::with_capacity(steps),
            g: Vec::with_capacity(steps),
            o: Vec::with_capacity(steps),
            tanh_c: Vec::with_capacity(steps),
            hs: vec![Matrix::zeros(bsz, h)],
            cs: vec![Matrix::zeros(bsz, h)],
            mask: seq.mask().to_vec(),
            batch: bsz,
            steps,
        };
        let mut hidden_seq = SequenceBatch::zeros(bsz, steps, h);
        for t in 0..steps {
            let x_t = seq.step_matrix(t);
            let h_prev = cache.hs[t].clone();
            let c_prev = cache.cs[t].clone();
            let mut a = x_t.matmul(&self.w)?;
            let rec = h_prev.matmul(&self.u)?;
            for (av, rv) in a.data_mut().iter_mut().zip(rec.data()) {
                *av += rv;
            }
            a.add_row_broadcast(&self.b)?;
            let mut gi = Matrix::zeros(bsz, h);
            let mut gf = Matrix::zeros(bsz, h);
            let mut gg = Matrix::zeros(bsz, h);
            let mut go = Matrix::zeros(bsz, h);
            let mut c_t = Matrix::zeros(bsz, h);
            let mut tc = Matrix::zeros(bsz, h);
            let mut h_t = Matrix::zeros(bsz, h);
            for bi in 0..bsz {
                if seq.present(bi, t) {
                    for j in 0..h {
                        let iv = sigmoid(a.get(bi, j));
                        let fv = sigmoid(a.get(bi, h + j));
                        let gv = a.get(bi, 2 * h + j).tanh();
                        let ov = sigmoid(a.get(bi, 3 * h + j));
                        let cv = fv * c_prev.get(bi, j) + iv * gv;
                        let tv = cv.tanh();
                        gi.set(bi, j, iv);
                        gf.set(bi, j, fv);
                        gg.set(bi, j, gv);
                        go.set(bi, j, ov);
                        c_t.set(bi, j, cv);
                        tc.set(bi, j, tv);
                        h_t.set(bi, j, ov * tv);
                    }
                } else {
                    // carry state through masked step
                    for j in 0..h {
                        c_t.set(bi, j, c_prev.get(bi, j));
                        h_t.set(bi, j, h_prev.get(bi, j));
                    }
                }
            }
            hidden_seq.set_step(t, &h_t);
            cache.i.push(gi);
            cache.f.push(gf);
            cache.g.push(gg);
            cache.o.push(go);
            cache.tanh_c.push(tc);
            cache.hs.push(h_t);
            cache.cs.push(c_t);
        }
        for b in 0..bsz {
            for t in 0..steps {
                hidden_seq.set_present(b, t, seq.present(b, t));
            }
        }
        let last = cache.hs[steps].clone();
        Ok((cache, hidden_seq, last))
    }

    /// Full BPTT. `grad_hidden_seq` is the upstream gradient on every hidden
    /// state (may be `None`), `grad_last` the gradient on the final hidden
    /// state. Returns the gradient w.r.t. the input sequence and the
    /// parameter gradients.
    pub fn backward(
        &self,
        seq: &SequenceBatch,
        cache: &LstmCache,
        grad_hidden_seq: Option<&SequenceBatch>,
        grad_last: Option<&Matrix>,
    ) -> Result<(SequenceBatch, LstmGrads)> {
        let (bsz, steps, h) = (cache.batch, cache.steps, self.hidden);
        let f_in = self.input_width();
        let mut gw = Matrix::zeros(f_in, 4 * h);
        let mut gu = Matrix::zeros(h, 4 * h);
        let mut gb = vec![0.0; 4 * h];
        let mut grad_in = SequenceBatch::zeros(bsz, steps, f_in);
        let mut dh = Matrix::zeros(bsz, h);
        let mut dc = Matrix::zeros(bsz, h);
        if let Some(gl) = grad_last {
            for (d, g) in dh.data_mut().iter_mut().zip(gl.data()) {
                *d += g;
            }
        }
        for t in (0..steps).rev() {
            if let Some(gs) = grad_hidden_seq {
                let g_t = gs.step_matrix(t);
                for (d, g) in dh.data_mut().iter_mut().zip(g_t.data()) {
                    *d += g;
                }
            }
            let c_prev = &cache.cs[t];
            let h_prev = &cache.hs[t];
            // pre-activation gradients, masked rows left at zero
            let mut da = Matrix::zeros(bsz, 4 * h);
            let mut dc_prev = Matrix::zeros(bsz, h);
            for bi in 0..bsz {
                if cache.mask[bi * steps + t] {
                    for j in 0..h {
                        let iv = cache.i[t].get(bi, j);
                        let fv = cache.f[t].get(bi, j);
                        let gv = cache.g[t].get(bi, j);
                        let ov = cache.o[t].get(bi, j);
                        let tv = cache.tanh_c[t].get(bi, j);
                        let dhv = dh.get(bi, j);
                        let dcv = dc.get(bi, j) + dhv * ov * (1.0 - tv * tv);
                        da.set(bi, j, dcv * gv * iv * (1.0 - iv));
                        da.set(bi, h + j, dcv * c_prev.get(bi, j) * fv * (1.0 - fv));
                        da.set(bi, 2 * h + j, dcv * iv * (1.0 - gv * gv));
                        da.set(bi, 3 * h + j, dhv * tv * ov * (1.0 - ov));
                        dc_prev.set(bi, j, dcv * fv);
                    }
                } else {
                    // carry gradients through the masked step
                    for j in 0..h {
                        dc_prev.set(bi, j, dc.get(bi, j));
                    }
                }
            }
            let x_t = seq.step_matrix(t);
            let gw_t = x_t.matmul_tn(&da)?;
            for (a, b) in gw.data_mut().iter_mut().zip(gw_t.data()) {
                *a += b;
            }
            let gu_t = h_prev.matmul_tn(&da)?;
            for (a, b) in gu.data_mut().iter_mut().zip(gu_t.data()) {
                *a += b;
            }
            for r in 0..bsz {
                for (a, b) in gb.iter_mut().zip(da.row(r)) {
                    *a += b;
                }
            }
            let dx_t = da.matmul_nt(&self.w)?;
            grad_in.set_step(t, &dx_t);
            let mut dh_prev = da.matmul_nt(&self.u)?;
            for bi in 0..bsz {
                if !cache.mask[bi * steps + t] {
                    for j in 0..h {
                        let v = dh_prev.get(bi, j) + dh.get(bi, j);
                        dh_prev.set(bi, j, v);
                    }
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok((grad_in, LstmGrads { w: gw, u: gu, b: gb }))
    }
}
