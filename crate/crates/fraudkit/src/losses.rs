//! Loss functions over predicted probabilities, with analytic gradients.
//!
//! Every function returns the scalar loss together with dL/dp so the caller
//! can chain through the network's output sigmoid. Probabilities are clamped
//! away from {0, 1} before any log.

use crate::error::{Error, Result};
use crate::nn::clamp_prob;
use serde::{Deserialize, Serialize};

/// Per-class weights for the weighted cross entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

/// Focal-loss parameters; defaults follow alpha=0.25, gamma=3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams { alpha: 0.25, gamma: 3.0 }
    }
}

/// Loss selection by name in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    WeightedBce,
    Focal,
    Mse,
    Mfe,
    Msfe,
}

impl LossKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "bce" => LossKind::Bce,
            "weighted_bce" => LossKind::WeightedBce,
            "focal" => LossKind::Focal,
            "mse" => LossKind::Mse,
            "mfe" => LossKind::Mfe,
            "msfe" => LossKind::Msfe,
            other => return Err(Error::Parameter(format!("unknown loss `{other}`"))),
        })
    }

    /// MFE/MSFE need both classes in every mini-batch.
    pub fn requires_mixed_batches(self) -> bool {
        matches!(self, LossKind::Mfe | LossKind::Msfe)
    }
}

/// w0 = (1/neg)*(total/2), w1 = (1/pos)*(total/2); keeps the loss amplitude
/// per sample comparable across classes.
pub fn class_weights(pos: usize, neg: usize) -> Result<ClassWeights> {
    if pos == 0 || neg == 0 {
        return Err(Error::Parameter("class_weights: empty class".into()));
    }
    let total = (pos + neg) as f64;
    Ok(ClassWeights {
        w0: total / 2.0 / neg as f64,
        w1: total / 2.0 / pos as f64,
    })
}

fn check_lengths(p: &[f64], y: &[f64]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::Dimension(format!(
            "loss: |p|={} != |y|={}",
            p.len(),
            y.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::Dimension("loss: empty batch".into()));
    }
    Ok(())
}

/// Mean binary cross entropy.
pub fn bce(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    weighted_bce(p, y, ClassWeights { w0: 1.0, w1: 1.0 })
}

/// Per-sample BCE scaled by the class weight, then averaged.
pub fn weighted_bce(p: &[f64], y: &[f64], w: ClassWeights) -> Result<(f64, Vec<f64>)> {
    check_lengths(p, y)?;
    if w.w0 <= 0.0 || w.w1 <= 0.0 {
        return Err(Error::Parameter("class weights must be positive".into()));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        let pi = clamp_prob(p[i]);
        let wi = if y[i] > 0.5 { w.w1 } else { w.w0 };
        loss += -wi * (y[i] * pi.ln() + (1.0 - y[i]) * (1.0 - pi).ln());
        grad[i] = wi * (-y[i] / pi + (1.0 - y[i]) / (1.0 - pi)) / n;
    }
    Ok((loss / n, grad))
}

/// Focal loss: mean of -alpha (1 - p_t)^gamma log p_t with
/// p_t = p if y=1 else 1-p. alpha applies uniformly so that
/// (alpha=1, gamma=0) reduces exactly to BCE.
pub fn focal_loss(p: &[f64], y: &[f64], fp: FocalParams) -> Result<(f64, Vec<f64>)> {
    check_lengths(p, y)?;
    if fp.gamma < 0.0 {
        return Err(Error::Parameter("focal gamma must be >= 0".into()));
    }
    if fp.alpha <= 0.0 {
        return Err(Error::Parameter("focal alpha must be > 0".into()));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        let pi = clamp_prob(p[i]);
        let (pt, dpt_dp) = if y[i] > 0.5 { (pi, 1.0) } else { (1.0 - pi, -1.0) };
        let one_m = 1.0 - pt;
        let pow = one_m.powf(fp.gamma);
        loss += -fp.alpha * pow * pt.ln();
        // d/dpt [-(1-pt)^g ln pt] = g (1-pt)^(g-1) ln pt - (1-pt)^g / pt
        let dpow = if fp.gamma == 0.0 {
            0.0
        } else {
            fp.gamma * one_m.powf(fp.gamma - 1.0)
        };
        let dl_dpt = fp.alpha * (dpow * pt.ln() - pow / pt);
        grad[i] = dl_dpt * dpt_dp / n;
    }
    Ok((loss / n, grad))
}

/// Mean of (1/2)(y - p)^2 over all samples.
pub fn mse(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(p, y)?;
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        let d = y[i] - p[i];
        loss += 0.5 * d * d;
        grad[i] = -d / n;
    }
    Ok((loss / n, grad))
}

fn false_errors(p: &[f64], y: &[f64]) -> Result<(f64, f64, Vec<f64>, Vec<f64>, bool)> {
    check_lengths(p, y)?;
    let npos = y.iter().filter(|&&v| v > 0.5).count();
    let nneg = y.len() - npos;
    let single_class = npos == 0 || nneg == 0;
    if single_class {
        // absent-class term treated as 0; the training harness samples
        // mixed batches (see LossKind::requires_mixed_batches)
        eprintln!("warning: mfe/msfe batch contains a single class");
    }
    let mut fpe = 0.0;
    let mut fne = 0.0;
    let mut dfpe = vec![0.0; p.len()];
    let mut dfne = vec![0.0; p.len()];
    for i in 0..p.len() {
        let d = y[i] - p[i];
        if y[i] > 0.5 {
            if npos > 0 {
                fne += 0.5 * d * d / npos as f64;
                dfne[i] = -d / npos as f64;
            }
        } else if nneg > 0 {
            fpe += 0.5 * d * d / nneg as f64;
            dfpe[i] = -d / nneg as f64;
        }
    }
    Ok((fpe, fne, dfpe, dfne, single_class))
}

/// Mean false error: FPE + FNE (per-class mean squared errors).
pub fn mfe(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (fpe, fne, dfpe, dfne, _) = false_errors(p, y)?;
    let grad = dfpe.iter().zip(&dfne).map(|(a, b)| a + b).collect();
    Ok((fpe + fne, grad))
}

/// Mean squared false error: FPE^2 + FNE^2.
pub fn msfe(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (fpe, fne, dfpe, dfne, _) = false_errors(p, y)?;
    let grad = dfpe
        .iter()
        .zip(&dfne)
        .map(|(a, b)| 2.0 * fpe * a + 2.0 * fne * b)
        .collect();
    Ok((fpe * fpe + fne * fne, grad))
}

/// Dispatch used by the training loop.
pub fn evaluate(
    kind: LossKind,
    p: &[f64],
    y: &[f64],
    weights: Option<ClassWeights>,
    focal: FocalParams,
) -> Result<(f64, Vec<f64>)> {
    match kind {
        LossKind::Bce => bce(p, y),
        LossKind::WeightedBce => {
            let w = weights.ok_or_else(|| {
                Error::Parameter("weighted_bce requires class weights".into())
            })?;
            weighted_bce(p, y, w)
        }
        LossKind::Focal => focal_loss(p, y, focal),
        LossKind::Mse => mse(p, y),
        LossKind::Mfe => mfe(p, y),
        LossKind::Msfe => msfe(p, y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn class_weights_examples() {
        let w = class_weights(500, 500).unwrap();
        assert_eq!((w.w0, w.w1), (1.0, 1.0));
        let w = class_weights(10, 990).unwrap();
        assert!((w.w1 - 50.0).abs() < 1e-12);
        assert!((w.w0 - 500.0 / 990.0).abs() < 1e-12);
        let w = class_weights(1, 1).unwrap();
        assert_eq!((w.w0, w.w1), (1.0, 1.0));
        assert!(class_weights(0, 5).is_err());
    }

    #[test]
    fn bce_symmetric_point() {
        let (l, _) = bce(&[0.5], &[1.0]).unwrap();
        assert!((l - LN2).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction() {
        let (l, _) = bce(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(l < 1e-10);
    }

    #[test]
    fn bce_matches_scalar_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let p: Vec<f64> = (0..64).map(|_| rng.gen_range(0.01..0.99)).collect();
        let y: Vec<f64> = (0..64).map(|_| f64::from(rng.gen_bool(0.3))).collect();
        let (l, _) = bce(&p, &y).unwrap();
        let mut expect = 0.0;
        for i in 0..64 {
            expect += -(y[i] * p[i].ln() + (1.0 - y[i]) * (1.0 - p[i]).ln());
        }
        expect /= 64.0;
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn weighted_bce_unit_weights_equals_bce() {
        let p = [0.2, 0.7, 0.9];
        let y = [0.0, 1.0, 1.0];
        let (a, ga) = bce(&p, &y).unwrap();
        let (b, gb) = weighted_bce(&p, &y, ClassWeights { w0: 1.0, w1: 1.0 }).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert_eq!(ga, gb);
    }

    #[test]
    fn weighted_bce_scales_linearly() {
        let (l1, _) = bce(&[0.6], &[1.0]).unwrap();
        let (l2, _) = weighted_bce(&[0.6], &[1.0], ClassWeights { w0: 1.0, w1: 2.0 }).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-14);
    }

    #[test]
    fn weighted_bce_balances_class_contributions() {
        // equal per-class mean errors -> equal weighted class sums
        let (pos, neg) = (4usize, 16usize);
        let w = class_weights(pos, neg).unwrap();
        let mut p = Vec::new();
        let mut y = Vec::new();
        for _ in 0..pos {
            p.push(0.7);
            y.push(1.0);
        }
        for _ in 0..neg {
            p.push(0.3);
            y.push(0.0);
        }
        let per_pos = -w.w1 * 0.7f64.ln();
        let per_neg = -w.w0 * (1.0f64 - 0.3).ln();
        assert!((per_pos * pos as f64 - per_neg * neg as f64).abs() < 1e-10);
        // and the implementation agrees with the hand sum
        let (l, _) = weighted_bce(&p, &y, w).unwrap();
        let expect = (per_pos * pos as f64 + per_neg * neg as f64) / (pos + neg) as f64;
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn focal_reduces_to_bce() {
        let p = [0.2, 0.7, 0.55];
        let y = [0.0, 1.0, 0.0];
        let (a, ga) = bce(&p, &y).unwrap();
        let (b, gb) = focal_loss(&p, &y, FocalParams { alpha: 1.0, gamma: 0.0 }).unwrap();
        assert!((a - b).abs() < 1e-12);
        for (x, z) in ga.iter().zip(&gb) {
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_direct_value() {
        // p=0.5, y=1, alpha=0.25, gamma=3 -> 0.25 * 0.125 * ln 2
        let (l, _) = focal_loss(&[0.5], &[1.0], FocalParams::default()).unwrap();
        assert!((l - 0.25 * 0.125 * LN2).abs() < 1e-12);
    }

    #[test]
    fn focal_vanishes_faster_than_bce() {
        let fp = FocalParams { alpha: 1.0, gamma: 2.0 };
        let (fl, _) = focal_loss(&[0.99], &[1.0], fp).unwrap();
        let (cl, _) = bce(&[0.99], &[1.0]).unwrap();
        assert!((fl / cl - 0.01f64.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn focal_negative_gamma_rejected() {
        assert!(focal_loss(&[0.5], &[1.0], FocalParams { alpha: 1.0, gamma: -1.0 }).is_err());
    }

    #[test]
    fn mse_examples() {
        let (l, _) = mse(&[0.3, 0.9], &[0.3, 0.9]).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = mse(&[0.0], &[1.0]).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mfe_direct_values() {
        // p=[0.2 (y=0), 0.4 (y=1)] -> FPE=0.02, FNE=0.18
        let p = [0.2, 0.4];
        let y = [0.0, 1.0];
        let (l, _) = mfe(&p, &y).unwrap();
        assert!((l - 0.20).abs() < 1e-12);
        let (ls, _) = msfe(&p, &y).unwrap();
        assert!((ls - 0.0328).abs() < 1e-12);
    }

    #[test]
    fn mfe_balanced_batch_is_twice_mse() {
        let p = [0.2, 0.8, 0.4, 0.6];
        let y = [0.0, 1.0, 0.0, 1.0];
        let (a, _) = mfe(&p, &y).unwrap();
        let (b, _) = mse(&p, &y).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-12);
    }

    #[test]
    fn mfe_perfect_predictions() {
        let p = [0.0, 1.0];
        let y = [0.0, 1.0];
        assert_eq!(mfe(&p, &y).unwrap().0, 0.0);
        assert_eq!(msfe(&p, &y).unwrap().0, 0.0);
    }
}
