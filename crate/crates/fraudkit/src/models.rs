//! Model definitions and training loops.
//!
//! Three model families share the layer primitives from [`crate::nn`]:
//!
//! * [`Mlp`] — feed-forward classifier over static provider features. Each
//!   hidden block is dense -> batchnorm -> relu -> dropout; an empty hidden
//!   list degenerates to logistic regression.
//! * [`LstmAutoencoder`] — sequence autoencoder over quarterly feature
//!   sequences; the encoder's bottleneck is the provider's temporal embedding.
//! * [`MinnAe`] — a claims-side MLP branch concatenated with the (frozen)
//!   autoencoder embedding, followed by a small classification head.
//!
//! Training is plain minibatch Adam with loss-based early stopping
//! (best-epoch restore). Class-sensitive losses that are undefined on
//! single-class batches get a sampler that guarantees mixed batches.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SequenceBatch};
use crate::losses::{self, ClassWeights, FocalParams, LossKind};
use crate::nn::{
    activation_backward, activation_forward, dropout_apply_mask, dropout_forward, glorot_uniform,
    Activation, AdamHyper, AdamState, BatchNorm, BatchNormCache, Dense, DenseGrads, DropoutMask,
    GateInit, Lstm, LstmGrads,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

const BN_MOMENTUM: f64 = 0.99;
const BN_EPSILON: f64 = 1e-5;

// ---------------------------------------------------------------------------
// hidden block: dense -> batchnorm -> relu -> dropout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Block {
    dense: Dense,
    bn: BatchNorm,
}

struct BlockCache {
    x: Matrix,
    bn: BatchNormCache,
    pre_act: Matrix,
    act: Matrix,
    drop: DropoutMask,
}

struct BlockGrads {
    dense: DenseGrads,
    gamma: Vec<f64>,
    beta: Vec<f64>,
}

impl Block {
    fn new(input: usize, output: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Block {
            dense: Dense::new(glorot_uniform(input, output, rng), vec![0.0; output])?,
            bn: BatchNorm::new(output, BN_MOMENTUM, BN_EPSILON)?,
        })
    }

    fn forward_train(
        &self,
        x: &Matrix,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<(Matrix, BlockCache)> {
        let z = self.dense.forward(x)?;
        let (pre_act, bn_cache) = self.bn.forward_train(&z)?;
        let act = activation_forward(&pre_act, Activation::Relu)?;
        let (y, drop) = dropout_forward(&act, dropout, rng)?;
        Ok((
            y,
            BlockCache {
                x: x.clone(),
                bn: bn_cache,
                pre_act,
                act,
                drop,
            },
        ))
    }

    fn forward_infer(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.dense.forward(x)?;
        let n = self.bn.forward_infer(&z)?;
        activation_forward(&n, Activation::Relu)
    }

    fn backward(&self, cache: &BlockCache, gy: &Matrix) -> Result<(Matrix, BlockGrads)> {
        let g_act = dropout_apply_mask(gy, &cache.drop);
        let g_pre = activation_backward(&cache.pre_act, &cache.act, &g_act, Activation::Relu);
        let (g_z, gamma, beta) = self.bn.backward(&cache.bn, &g_pre)?;
        let (g_x, dense) = self.dense.backward(&cache.x, &g_z)?;
        Ok((g_x, BlockGrads { dense, gamma, beta }))
    }
}

// ---------------------------------------------------------------------------
// MLP classifier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Hidden layer widths; empty means logistic regression.
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![20, 10],
            dropout: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    blocks: Vec<Block>,
    out: Dense,
    dropout: f64,
}

pub struct MlpCache {
    blocks: Vec<BlockCache>,
    out_in: Matrix,
    probs: Vec<f64>,
}

pub struct MlpGrads {
    blocks: Vec<BlockGrads>,
    out: DenseGrads,
}

impl Mlp {
    pub fn new(input: usize, cfg: &MlpConfig, rng: &mut impl Rng) -> Result<Self> {
        if input == 0 {
            return Err(Error::Dimension("mlp input width must be positive".into()));
        }
        let mut blocks = Vec::with_capacity(cfg.hidden.len());
        let mut width = input;
        for &h in &cfg.hidden {
            if h == 0 {
                return Err(Error::Parameter("mlp hidden width must be positive".into()));
            }
            blocks.push(Block::new(width, h, rng)?);
            width = h;
        }
        let out = Dense::new(glorot_uniform(width, 1, rng), vec![0.0])?;
        Ok(Mlp {
            blocks,
            out,
            dropout: cfg.dropout,
        })
    }

    pub fn input_width(&self) -> usize {
        self.blocks
            .first()
            .map(|b| b.dense.in_width())
            .unwrap_or_else(|| self.out.in_width())
    }

    pub fn forward_train(&self, x: &Matrix, rng: &mut impl Rng) -> Result<(Vec<f64>, MlpCache)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (next, cache) = b.forward_train(&h, self.dropout, rng)?;
            caches.push(cache);
            h = next;
        }
        let logits = self.out.forward(&h)?;
        let probs: Vec<f64> = logits.data().iter().map(|&z| crate::nn::sigmoid(z)).collect();
        Ok((
            probs.clone(),
            MlpCache {
                blocks: caches,
                out_in: h,
                probs,
            },
        ))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward_infer(&h)?;
        }
        let logits = self.out.forward(&h)?;
        Ok(logits.data().iter().map(|&z| crate::nn::sigmoid(z)).collect())
    }

    /// `grad_p` is dL/dp per sample. Returns the gradient w.r.t. the input
    /// (needed when the MLP is a sub-network) and the parameter gradients.
    pub fn backward(&self, cache: &MlpCache, grad_p: &[f64]) -> Result<(Matrix, MlpGrads)> {
        if grad_p.len() != cache.probs.len() {
            return Err(Error::Dimension("mlp backward gradient length mismatch".into()));
        }
        let dz: Vec<f64> = grad_p
            .iter()
            .zip(&cache.probs)
            .map(|(&g, &p)| g * p * (1.0 - p))
            .collect();
        let g_logits = Matrix::from_vec(dz.len(), 1, dz)?;
        let (mut g, out) = self.out.backward(&cache.out_in, &g_logits)?;
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (gx, bg) = b.backward(c, &g)?;
            block_grads.push(bg);
            g = gx;
        }
        block_grads.reverse();
        Ok((
            g,
            MlpGrads {
                blocks: block_grads,
                out,
            },
        ))
    }

    fn update_running(&mut self, cache: &MlpCache) {
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            b.bn.update_running(&c.bn);
        }
    }

    fn param_shapes(&self) -> Vec<usize> {
        let mut s = Vec::new();
        for b in &self.blocks {
            s.push(b.dense.weights.data().len());
            s.push(b.dense.bias.len());
            s.push(b.bn.gamma.len());
            s.push(b.bn.beta.len());
        }
        s.push(self.out.weights.data().len());
        s.push(self.out.bias.len());
        s
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            p.push(b.dense.weights.data_mut());
            p.push(&mut b.dense.bias);
            p.push(&mut b.bn.gamma);
            p.push(&mut b.bn.beta);
        }
        p.push(self.out.weights.data_mut());
        p.push(&mut self.out.bias);
        p
    }

    pub fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut t = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            t.push((format!("block{i}.dense.w"), b.dense.weights.data().to_vec()));
            t.push((format!("block{i}.dense.b"), b.dense.bias.clone()));
            t.push((format!("block{i}.bn.gamma"), b.bn.gamma.clone()));
            t.push((format!("block{i}.bn.beta"), b.bn.beta.clone()));
            t.push((format!("block{i}.bn.mean"), b.bn.running_mean.clone()));
            t.push((format!("block{i}.bn.var"), b.bn.running_var.clone()));
        }
        t.push(("out.w".into(), self.out.weights.data().to_vec()));
        t.push(("out.b".into(), self.out.bias.clone()));
        t
    }

    pub fn load_tensors(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<()> {
        let mut slots: Vec<(String, &mut [f64])> = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            slots.push((format!("block{i}.dense.w"), b.dense.weights.data_mut()));
            slots.push((format!("block{i}.dense.b"), &mut b.dense.bias));
            slots.push((format!("block{i}.bn.gamma"), &mut b.bn.gamma));
            slots.push((format!("block{i}.bn.beta"), &mut b.bn.beta));
            slots.push((format!("block{i}.bn.mean"), &mut b.bn.running_mean));
            slots.push((format!("block{i}.bn.var"), &mut b.bn.running_var));
        }
        slots.push(("out.w".into(), self.out.weights.data_mut()));
        slots.push(("out.b".into(), &mut self.out.bias));
        copy_tensors(tensors, slots)
    }
}

fn copy_tensors(src: &[(String, Vec<f64>)], mut dst: Vec<(String, &mut [f64])>) -> Result<()> {
    if src.len() != dst.len() {
        return Err(Error::Checkpoint(format!(
            "tensor count mismatch: {} stored, {} expected",
            src.len(),
            dst.len()
        )));
    }
    for ((name, values), (want, slot)) in src.iter().zip(dst.iter_mut()) {
        if name != want {
            return Err(Error::Checkpoint(format!(
                "tensor name mismatch: stored {name}, expected {want}"
            )));
        }
        if values.len() != slot.len() {
            return Err(Error::Checkpoint(format!("tensor {name} length mismatch")));
        }
        slot.copy_from_slice(values);
    }
    Ok(())
}

fn mlp_grad_slices(g: &MlpGrads) -> Vec<&[f64]> {
    let mut s: Vec<&[f64]> = Vec::new();
    for b in &g.blocks {
        s.push(b.dense.weights.data());
        s.push(&b.dense.bias);
        s.push(&b.gamma);
        s.push(&b.beta);
    }
    s.push(g.out.weights.data());
    s.push(&g.out.bias);
    s
}

// ---------------------------------------------------------------------------
// LSTM autoencoder
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub latent: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            hidden1: 64,
            hidden2: 32,
            latent: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmAutoencoder {
    enc1: Lstm,
    enc2: Lstm,
    enc_out: Dense,
    dec1: Lstm,
    dec2: Lstm,
    dec_out: Dense,
}

fn new_lstm(input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Lstm> {
    Lstm::new(
        glorot_uniform(input, 4 * hidden, rng),
        glorot_uniform(hidden, 4 * hidden, rng),
        GateInit::lstm_bias(hidden),
    )
}

pub struct AeForward {
    enc1_cache: crate::nn::LstmCache,
    enc1_seq: SequenceBatch,
    enc2_cache: crate::nn::LstmCache,
    enc2_last: Matrix,
    pub latent: Matrix,
    dec_in: SequenceBatch,
    dec1_cache: crate::nn::LstmCache,
    dec1_seq: SequenceBatch,
    dec2_cache: crate::nn::LstmCache,
    dec2_seq: SequenceBatch,
    pub recon: SequenceBatch,
}

pub struct AeGrads {
    enc1: LstmGrads,
    enc2: LstmGrads,
    enc_out: DenseGrads,
    dec1: LstmGrads,
    dec2: LstmGrads,
    dec_out: DenseGrads,
}

impl LstmAutoencoder {
    pub fn new(features: usize, cfg: &AeConfig, rng: &mut impl Rng) -> Result<Self> {
        if features == 0 || cfg.hidden1 == 0 || cfg.hidden2 == 0 || cfg.latent == 0 {
            return Err(Error::Parameter("autoencoder widths must be positive".into()));
        }
        Ok(LstmAutoencoder {
            enc1: new_lstm(features, cfg.hidden1, rng)?,
            enc2: new_lstm(cfg.hidden1, cfg.hidden2, rng)?,
            enc_out: Dense::new(
                glorot_uniform(cfg.hidden2, cfg.latent, rng),
                vec![0.0; cfg.latent],
            )?,
            dec1: new_lstm(cfg.latent, cfg.hidden2, rng)?,
            dec2: new_lstm(cfg.hidden2, cfg.hidden1, rng)?,
            dec_out: Dense::new(
                glorot_uniform(cfg.hidden1, features, rng),
                vec![0.0; features],
            )?,
        })
    }

    pub fn latent_width(&self) -> usize {
        self.enc_out.out_width()
    }

    pub fn forward(&self, seq: &SequenceBatch) -> Result<AeForward> {
        let (enc1_cache, enc1_seq, _) = self.enc1.forward(seq)?;
        let (enc2_cache, _, enc2_last) = self.enc2.forward(&enc1_seq)?;
        let latent = self.enc_out.forward(&enc2_last)?;
        // decoder input: the latent vector repeated at every present step
        let mut dec_in = SequenceBatch::zeros(seq.batch(), seq.steps(), latent.cols());
        for t in 0..seq.steps() {
            dec_in.set_step(t, &latent);
            for b in 0..seq.batch() {
                dec_in.set_present(b, t, seq.present(b, t));
            }
        }
        let (dec1_cache, dec1_seq, _) = self.dec1.forward(&dec_in)?;
        let (dec2_cache, dec2_seq, _) = self.dec2.forward(&dec1_seq)?;
        let mut recon = SequenceBatch::zeros(seq.batch(), seq.steps(), seq.features());
        for t in 0..seq.steps() {
            recon.set_step(t, &self.dec_out.forward(&dec2_seq.step_matrix(t))?);
            for b in 0..seq.batch() {
                recon.set_present(b, t, seq.present(b, t));
            }
        }
        Ok(AeForward {
            enc1_cache,
            enc1_seq,
            enc2_cache,
            enc2_last,
            latent,
            dec_in,
            dec1_cache,
            dec1_seq,
            dec2_cache,
            dec2_seq,
            recon,
        })
    }

    /// Encoder-only pass; the provider embedding the downstream model consumes.
    pub fn encode(&self, seq: &SequenceBatch) -> Result<Matrix> {
        let (_, enc1_seq, _) = self.enc1.forward(seq)?;
        let (_, _, enc2_last) = self.enc2.forward(&enc1_seq)?;
        self.enc_out.forward(&enc2_last)
    }

    /// Mean squared reconstruction error over present steps, halved (so the
    /// gradient is residual / count). Returns the loss and dL/drecon.
    pub fn masked_mse(target: &SequenceBatch, fwd: &AeForward) -> Result<(f64, SequenceBatch)> {
        let present: usize = target.mask().iter().filter(|&&m| m).count();
        let count = (present * target.features()) as f64;
        if count == 0.0 {
            return Err(Error::DegenerateBatch("no present steps in batch".into()));
        }
        let mut loss = 0.0;
        let mut grad = SequenceBatch::zeros(target.batch(), target.steps(), target.features());
        for b in 0..target.batch() {
            for t in 0..target.steps() {
                if !target.present(b, t) {
                    continue;
                }
                grad.set_present(b, t, true);
                for f in 0..target.features() {
                    let d = fwd.recon.get(b, t, f) - target.get(b, t, f);
                    loss += 0.5 * d * d / count;
                    grad.set(b, t, f, d / count);
                }
            }
        }
        Ok((loss, grad))
    }

    pub fn backward(
        &self,
        seq: &SequenceBatch,
        fwd: &AeForward,
        grad_recon: &SequenceBatch,
    ) -> Result<AeGrads> {
        // output projection, step by step
        let f = seq.features();
        let h1 = self.dec_out.in_width();
        let mut dec_out = DenseGrads {
            weights: Matrix::zeros(h1, f),
            bias: vec![0.0; f],
        };
        let mut g_dec2 = SequenceBatch::zeros(seq.batch(), seq.steps(), h1);
        for t in 0..seq.steps() {
            let (gx, g) = self
                .dec_out
                .backward(&fwd.dec2_seq.step_matrix(t), &grad_recon.step_matrix(t))?;
            g_dec2.set_step(t, &gx);
            for (a, b) in dec_out.weights.data_mut().iter_mut().zip(g.weights.data()) {
                *a += b;
            }
            for (a, b) in dec_out.bias.iter_mut().zip(&g.bias) {
                *a += b;
            }
        }
        let (g_dec1_seq, dec2) =
            self.dec2
                .backward(&fwd.dec1_seq, &fwd.dec2_cache, Some(&g_dec2), None)?;
        let (g_dec_in, dec1) =
            self.dec1
                .backward(&fwd.dec_in, &fwd.dec1_cache, Some(&g_dec1_seq), None)?;
        // the latent was broadcast to every step: sum the step gradients
        let mut g_latent = Matrix::zeros(seq.batch(), self.enc_out.out_width());
        for t in 0..seq.steps() {
            let step = g_dec_in.step_matrix(t);
            for (a, b) in g_latent.data_mut().iter_mut().zip(step.data()) {
                *a += b;
            }
        }
        let (g_enc2_last, enc_out) = self.enc_out.backward(&fwd.enc2_last, &g_latent)?;
        let (g_enc1_seq, enc2) =
            self.enc2
                .backward(&fwd.enc1_seq, &fwd.enc2_cache, None, Some(&g_enc2_last))?;
        let (_, enc1) = self
            .enc1
            .backward(seq, &fwd.enc1_cache, Some(&g_enc1_seq), None)?;
        Ok(AeGrads {
            enc1,
            enc2,
            enc_out,
            dec1,
            dec2,
            dec_out,
        })
    }

    fn param_shapes(&self) -> Vec<usize> {
        let mut s = Vec::new();
        for l in [&self.enc1, &self.enc2, &self.dec1, &self.dec2] {
            s.push(l.w.data().len());
            s.push(l.u.data().len());
            s.push(l.b.len());
        }
        for d in [&self.enc_out, &self.dec_out] {
            s.push(d.weights.data().len());
            s.push(d.bias.len());
        }
        s
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = Vec::new();
        for l in [&mut self.enc1, &mut self.enc2, &mut self.dec1, &mut self.dec2] {
            p.push(l.w.data_mut());
            p.push(l.u.data_mut());
            p.push(&mut l.b);
        }
        for d in [&mut self.enc_out, &mut self.dec_out] {
            p.push(d.weights.data_mut());
            p.push(&mut d.bias);
        }
        p
    }

    pub fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut t = Vec::new();
        for (name, l) in [
            ("enc1", &self.enc1),
            ("enc2", &self.enc2),
            ("dec1", &self.dec1),
            ("dec2", &self.dec2),
        ] {
            t.push((format!("{name}.w"), l.w.data().to_vec()));
            t.push((format!("{name}.u"), l.u.data().to_vec()));
            t.push((format!("{name}.b"), l.b.clone()));
        }
        for (name, d) in [("enc_out", &self.enc_out), ("dec_out", &self.dec_out)] {
            t.push((format!("{name}.w"), d.weights.data().to_vec()));
            t.push((format!("{name}.b"), d.bias.clone()));
        }
        t
    }

    pub fn load_tensors(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<()> {
        let mut slots: Vec<(String, &mut [f64])> = Vec::new();
        for (name, l) in [
            ("enc1", &mut self.enc1),
            ("enc2", &mut self.enc2),
            ("dec1", &mut self.dec1),
            ("dec2", &mut self.dec2),
        ] {
            slots.push((format!("{name}.w"), l.w.data_mut()));
            slots.push((format!("{name}.u"), l.u.data_mut()));
            slots.push((format!("{name}.b"), &mut l.b));
        }
        for (name, d) in [("enc_out", &mut self.enc_out), ("dec_out", &mut self.dec_out)] {
            slots.push((format!("{name}.w"), d.weights.data_mut()));
            slots.push((format!("{name}.b"), &mut d.bias));
        }
        copy_tensors(tensors, slots)
    }
}

fn ae_grad_slices(g: &AeGrads) -> Vec<&[f64]> {
    let mut s: Vec<&[f64]> = Vec::new();
    for l in [&g.enc1, &g.enc2, &g.dec1, &g.dec2] {
        s.push(l.w.data());
        s.push(l.u.data());
        s.push(&l.b);
    }
    for d in [&g.enc_out, &g.dec_out] {
        s.push(d.weights.data());
        s.push(&d.bias);
    }
    s
}

// ---------------------------------------------------------------------------
// multi-input model: claims branch || frozen temporal embedding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinnConfig {
    pub branch_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for MinnConfig {
    fn default() -> Self {
        MinnConfig {
            branch_hidden: vec![20, 10],
            head_hidden: vec![15],
            dropout: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinnAe {
    branch: Vec<Block>,
    head: Mlp,
    dropout: f64,
    latent_width: usize,
}

pub struct MinnCache {
    branch: Vec<BlockCache>,
    head: MlpCache,
    branch_width: usize,
}

pub struct MinnGrads {
    branch: Vec<BlockGrads>,
    head: MlpGrads,
}

impl MinnAe {
    pub fn new(
        static_width: usize,
        latent_width: usize,
        cfg: &MinnConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.branch_hidden.is_empty() {
            return Err(Error::Parameter("claims branch needs hidden layers".into()));
        }
        let mut branch = Vec::with_capacity(cfg.branch_hidden.len());
        let mut width = static_width;
        for &h in &cfg.branch_hidden {
            branch.push(Block::new(width, h, rng)?);
            width = h;
        }
        let head = Mlp::new(
            width + latent_width,
            &MlpConfig {
                hidden: cfg.head_hidden.clone(),
                dropout: cfg.dropout,
            },
            rng,
        )?;
        Ok(MinnAe {
            branch,
            head,
            dropout: cfg.dropout,
            latent_width,
        })
    }

    pub fn forward_train(
        &self,
        x: &Matrix,
        latent: &Matrix,
        rng: &mut impl Rng,
    ) -> Result<(Vec<f64>, MinnCache)> {
        if latent.cols() != self.latent_width || latent.rows() != x.rows() {
            return Err(Error::Dimension("latent shape mismatch".into()));
        }
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.branch.len());
        for b in &self.branch {
            let (next, c) = b.forward_train(&h, self.dropout, rng)?;
            caches.push(c);
            h = next;
        }
        let branch_width = h.cols();
        let joined = h.hcat(latent)?;
        let (probs, head) = self.head.forward_train(&joined, rng)?;
        Ok((
            probs,
            MinnCache {
                branch: caches,
                head,
                branch_width,
            },
        ))
    }

    pub fn predict(&self, x: &Matrix, latent: &Matrix) -> Result<Vec<f64>> {
        let mut h = x.clone();
        for b in &self.branch {
            h = b.forward_infer(&h)?;
        }
        self.head.predict(&h.hcat(latent)?)
    }

    /// The embedding input is frozen: its gradient is computed and discarded.
    pub fn backward(&self, cache: &MinnCache, grad_p: &[f64]) -> Result<MinnGrads> {
        let (g_joined, head) = self.head.backward(&cache.head, grad_p)?;
        // keep only the claims-branch columns of the joined gradient
        let mut g = Matrix::zeros(g_joined.rows(), cache.branch_width);
        for r in 0..g_joined.rows() {
            for c in 0..cache.branch_width {
                g.set(r, c, g_joined.get(r, c));
            }
        }
        let mut branch = Vec::with_capacity(self.branch.len());
        for (b, c) in self.branch.iter().zip(&cache.branch).rev() {
            let (gx, bg) = b.backward(c, &g)?;
            branch.push(bg);
            g = gx;
        }
        branch.reverse();
        Ok(MinnGrads { branch, head })
    }

    fn update_running(&mut self, cache: &MinnCache) {
        for (b, c) in self.branch.iter_mut().zip(&cache.branch) {
            b.bn.update_running(&c.bn);
        }
        self.head.update_running(&cache.head);
    }

    fn param_shapes(&self) -> Vec<usize> {
        let mut s = Vec::new();
        for b in &self.branch {
            s.push(b.dense.weights.data().len());
            s.push(b.dense.bias.len());
            s.push(b.bn.gamma.len());
            s.push(b.bn.beta.len());
        }
        s.extend(self.head.param_shapes());
        s
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.branch {
            p.push(b.dense.weights.data_mut());
            p.push(&mut b.dense.bias);
            p.push(&mut b.bn.gamma);
            p.push(&mut b.bn.beta);
        }
        p.extend(self.head.params_mut());
        p
    }

    pub fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut t = Vec::new();
        for (i, b) in self.branch.iter().enumerate() {
            t.push((format!("branch{i}.dense.w"), b.dense.weights.data().to_vec()));
            t.push((format!("branch{i}.dense.b"), b.dense.bias.clone()));
            t.push((format!("branch{i}.bn.gamma"), b.bn.gamma.clone()));
            t.push((format!("branch{i}.bn.beta"), b.bn.beta.clone()));
            t.push((format!("branch{i}.bn.mean"), b.bn.running_mean.clone()));
            t.push((format!("branch{i}.bn.var"), b.bn.running_var.clone()));
        }
        for (name, values) in self.head.tensors() {
            t.push((format!("head.{name}"), values));
        }
        t
    }

    pub fn load_tensors(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<()> {
        let n_branch = self.branch.len() * 6;
        if tensors.len() < n_branch {
            return Err(Error::Checkpoint("truncated tensor list".into()));
        }
        let mut slots: Vec<(String, &mut [f64])> = Vec::new();
        for (i, b) in self.branch.iter_mut().enumerate() {
            slots.push((format!("branch{i}.dense.w"), b.dense.weights.data_mut()));
            slots.push((format!("branch{i}.dense.b"), &mut b.dense.bias));
            slots.push((format!("branch{i}.bn.gamma"), &mut b.bn.gamma));
            slots.push((format!("branch{i}.bn.beta"), &mut b.bn.beta));
            slots.push((format!("branch{i}.bn.mean"), &mut b.bn.running_mean));
            slots.push((format!("branch{i}.bn.var"), &mut b.bn.running_var));
        }
        copy_tensors(&tensors[..n_branch], slots)?;
        let head: Vec<(String, Vec<f64>)> = tensors[n_branch..]
            .iter()
            .map(|(name, v)| {
                (
                    name.strip_prefix("head.").unwrap_or(name).to_string(),
                    v.clone(),
                )
            })
            .collect();
        self.head.load_tensors(&head)
    }
}

fn minn_grad_slices(g: &MinnGrads) -> Vec<&[f64]> {
    let mut s: Vec<&[f64]> = Vec::new();
    for b in &g.branch {
        s.push(b.dense.weights.data());
        s.push(&b.dense.bias);
        s.push(&b.gamma);
        s.push(&b.beta);
    }
    s.extend(mlp_grad_slices(&g.head));
    s
}

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without train-loss improvement before stopping; the best-loss
    /// epoch's parameters are restored.
    pub patience: usize,
    pub loss: String,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let fp = FocalParams::default();
        TrainConfig {
            epochs: 50,
            batch_size: 256,
            patience: 5,
            loss: "bce".into(),
            focal_alpha: fp.alpha,
            focal_gamma: fp.gamma,
            learning_rate: 0.001,
        }
    }
}

impl TrainConfig {
    pub fn loss_kind(&self) -> Result<LossKind> {
        LossKind::parse(&self.loss)
    }

    pub fn focal(&self) -> FocalParams {
        FocalParams {
            alpha: self.focal_alpha,
            gamma: self.focal_gamma,
        }
    }

    fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.learning_rate,
            ..AdamHyper::default()
        }
    }
}

/// Splits a shuffled index list into batches, folding a trailing singleton
/// into the previous batch so batchnorm always sees at least two rows.
fn make_batches(mut idx: Vec<usize>, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    rand::seq::SliceRandom::shuffle(&mut idx[..], rng);
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size.max(2)).map(<[usize]>::to_vec).collect();
    if batches.len() >= 2 && batches.last().map(Vec::len) == Some(1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// Batches that each contain at least one sample from both classes, for
/// losses that are undefined on single-class batches. Positives are dealt
/// round-robin; the batch count is capped so every batch can receive one.
fn make_mixed_batches(
    y: &[f64],
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.5).collect();
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] <= 0.5).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::ClassCoverage(
            "mixed-batch loss requires both classes in the training set".into(),
        ));
    }
    rand::seq::SliceRandom::shuffle(&mut pos[..], rng);
    rand::seq::SliceRandom::shuffle(&mut neg[..], rng);
    let want = y.len().div_ceil(batch_size.max(2));
    let n_batches = want.min(pos.len()).min(neg.len()).max(1);
    let mut batches: Vec<Vec<usize>> = vec![Vec::new(); n_batches];
    for (k, i) in pos.into_iter().enumerate() {
        batches[k % n_batches].push(i);
    }
    for (k, i) in neg.into_iter().enumerate() {
        batches[k % n_batches].push(i);
    }
    Ok(batches)
}

fn check_loss_finite(loss: f64, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Training {
            epoch,
            message: format!("non-finite loss {loss}"),
        });
    }
    Ok(())
}

/// One row of the training history CSV (`epoch,train_loss,val_loss,val_auc_prc`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_auc_prc: Option<f64>,
}

pub fn write_history_csv(out: &mut impl std::io::Write, history: &[EpochStats]) -> Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,val_auc_prc")?;
    for row in history {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            row.epoch,
            row.train_loss,
            opt(row.val_loss),
            opt(row.val_auc_prc)
        )?;
    }
    Ok(())
}

struct EarlyStop {
    best_loss: f64,
    stale: usize,
    patience: usize,
}

impl EarlyStop {
    fn new(patience: usize) -> Self {
        EarlyStop {
            best_loss: f64::INFINITY,
            stale: 0,
            patience,
        }
    }

    /// Returns (improved, stop).
    fn observe(&mut self, loss: f64) -> (bool, bool) {
        if loss < self.best_loss - 1e-9 {
            self.best_loss = loss;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale > self.patience)
        }
    }
}

/// Validation loss and AUC(PRC) for one epoch; either may be undefined
/// (single-class validation sets).
fn val_stats(
    scores: &[f64],
    yv: &[f64],
    kind: LossKind,
    weights: Option<ClassWeights>,
    focal: FocalParams,
) -> (Option<f64>, Option<f64>) {
    let val_loss = losses::evaluate(kind, scores, yv, weights, focal)
        .ok()
        .map(|(l, _)| l);
    let val_auc = crate::metrics::pr_curve(scores, yv)
        .ok()
        .map(|c| crate::metrics::auc_prc(&c));
    (val_loss, val_auc)
}

/// Trains a classifier over static features. Deterministic for a fixed seed.
/// When a validation set is given, early stopping monitors its loss and the
/// best-validation epoch's parameters are restored; otherwise the training
/// loss is monitored.
pub fn train_mlp(
    x: &Matrix,
    y: &[f64],
    mlp_cfg: &MlpConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    val: Option<(&Matrix, &[f64])>,
) -> Result<(Mlp, Vec<EpochStats>)> {
    if x.rows() != y.len() {
        return Err(Error::Dimension("label count does not match rows".into()));
    }
    let mut rng = crate::seed::rng_for(seed, "train-mlp");
    let mut model = Mlp::new(x.cols(), mlp_cfg, &mut rng)?;
    let loss_kind = train_cfg.loss_kind()?;
    let weights = class_weights_for(loss_kind, y)?;
    let mut adam = AdamState::new(&model.param_shapes(), train_cfg.adam());
    let mut stopper = EarlyStop::new(train_cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let batches = batches_for(loss_kind, y, train_cfg.batch_size, &mut rng)?;
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let xb = x.select_rows(batch);
            let yb: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let (p, cache) = model.forward_train(&xb, &mut rng)?;
            let (loss, grad) = losses::evaluate(loss_kind, &p, &yb, weights, train_cfg.focal())?;
            check_loss_finite(loss, epoch)?;
            let (_, grads) = model.backward(&cache, &grad)?;
            adam.step(&mut model.params_mut(), &mlp_grad_slices(&grads))?;
            model.update_running(&cache);
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = epoch_loss / seen as f64;
        let (val_loss, val_auc_prc) = match val {
            Some((xv, yv)) => {
                val_stats(&model.predict(xv)?, yv, loss_kind, weights, train_cfg.focal())
            }
            None => (None, None),
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_auc_prc,
        });
        let (improved, stop) = stopper.observe(val_loss.unwrap_or(train_loss));
        if improved {
            best = model.clone();
        }
        if stop {
            break;
        }
    }
    Ok((best, history))
}

/// Trains the sequence autoencoder on all providers (reconstruction needs no
/// labels). Deterministic for a fixed seed.
pub fn train_autoencoder(
    seqs: &SequenceBatch,
    ae_cfg: &AeConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<(LstmAutoencoder, Vec<EpochStats>)> {
    let mut rng = crate::seed::rng_for(seed, "train-ae");
    let mut model = LstmAutoencoder::new(seqs.features(), ae_cfg, &mut rng)?;
    let mut adam = AdamState::new(&model.param_shapes(), train_cfg.adam());
    let mut stopper = EarlyStop::new(train_cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let batches = make_batches((0..seqs.batch()).collect(), train_cfg.batch_size, &mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let sb = seqs.select_samples(batch);
            let fwd = model.forward(&sb)?;
            let (loss, grad) = LstmAutoencoder::masked_mse(&sb, &fwd)?;
            check_loss_finite(loss, epoch)?;
            let grads = model.backward(&sb, &fwd, &grad)?;
            adam.step(&mut model.params_mut(), &ae_grad_slices(&grads))?;
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = epoch_loss / seen as f64;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss: None,
            val_auc_prc: None,
        });
        let (improved, stop) = stopper.observe(train_loss);
        if improved {
            best = model.clone();
        }
        if stop {
            break;
        }
    }
    Ok((best, history))
}

/// Trains the multi-input model. `latent` rows are the frozen autoencoder
/// embeddings aligned with `x`.
pub fn train_minnae(
    x: &Matrix,
    latent: &Matrix,
    y: &[f64],
    minn_cfg: &MinnConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    val: Option<(&Matrix, &Matrix, &[f64])>,
) -> Result<(MinnAe, Vec<EpochStats>)> {
    if x.rows() != y.len() || latent.rows() != y.len() {
        return Err(Error::Dimension("label count does not match rows".into()));
    }
    let mut rng = crate::seed::rng_for(seed, "train-minnae");
    let mut model = MinnAe::new(x.cols(), latent.cols(), minn_cfg, &mut rng)?;
    let loss_kind = train_cfg.loss_kind()?;
    let weights = class_weights_for(loss_kind, y)?;
    let mut adam = AdamState::new(&model.param_shapes(), train_cfg.adam());
    let mut stopper = EarlyStop::new(train_cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let batches = batches_for(loss_kind, y, train_cfg.batch_size, &mut rng)?;
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let xb = x.select_rows(batch);
            let lb = latent.select_rows(batch);
            let yb: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let (p, cache) = model.forward_train(&xb, &lb, &mut rng)?;
            let (loss, grad) = losses::evaluate(loss_kind, &p, &yb, weights, train_cfg.focal())?;
            check_loss_finite(loss, epoch)?;
            let grads = model.backward(&cache, &grad)?;
            adam.step(&mut model.params_mut(), &minn_grad_slices(&grads))?;
            model.update_running(&cache);
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = epoch_loss / seen as f64;
        let (val_loss, val_auc_prc) = match val {
            Some((xv, lv, yv)) => val_stats(
                &model.predict(xv, lv)?,
                yv,
                loss_kind,
                weights,
                train_cfg.focal(),
            ),
            None => (None, None),
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_auc_prc,
        });
        let (improved, stop) = stopper.observe(val_loss.unwrap_or(train_loss));
        if improved {
            best = model.clone();
        }
        if stop {
            break;
        }
    }
    Ok((best, history))
}

fn class_weights_for(kind: LossKind, y: &[f64]) -> Result<Option<ClassWeights>> {
    if kind != LossKind::WeightedBce {
        return Ok(None);
    }
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    Ok(Some(losses::class_weights(pos, y.len() - pos)?))
}

fn batches_for(
    kind: LossKind,
    y: &[f64],
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    if kind.requires_mixed_batches() {
        make_mixed_batches(y, batch_size, rng)
    } else {
        Ok(make_batches((0..y.len()).collect(), batch_size, rng))
    }
}
