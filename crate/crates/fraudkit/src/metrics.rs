//! Confusion-based and curve-based evaluation metrics.
//!
//! Prediction is positive iff score >= threshold. Tied scores flip together
//! at one threshold, which keeps all curves deterministic.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// A swept curve: one point per threshold, x monotone along the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub thresholds: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Curve {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "threshold,x,y")?;
        for i in 0..self.x.len() {
            writeln!(out, "{},{},{}", self.thresholds[i], self.x[i], self.y[i])?;
        }
        Ok(())
    }
}

fn check_inputs(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "metrics: |scores|={} != |labels|={}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Dimension("metrics: empty input".into()));
    }
    Ok(())
}

pub fn confusion(scores: &[f64], labels: &[f64], threshold: f64) -> Result<ConfusionCounts> {
    check_inputs(scores, labels)?;
    let mut c = ConfusionCounts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, y > 0.5) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Ratio with the zero-denominator policy: 0 plus a degenerate flag.
fn safe_ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn precision(c: &ConfusionCounts) -> (f64, bool) {
    safe_ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> (f64, bool) {
    safe_ratio(c.tp, c.tp + c.fn_)
}

pub fn tnr(c: &ConfusionCounts) -> (f64, bool) {
    safe_ratio(c.tn, c.tn + c.fp)
}

pub fn gmean(c: &ConfusionCounts) -> (f64, bool) {
    let (r, dr) = recall(c);
    let (t, dt) = tnr(c);
    ((r * t).sqrt(), dr || dt)
}

/// Sorts indices by score descending and returns group boundaries of tied runs.
fn descending_groups(scores: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some((s, g)) if *s == scores[i] => g.push(i),
            _ => groups.push((scores[i], vec![i])),
        }
    }
    groups
}

/// Precision-recall curve at every distinct score as threshold, anchored at
/// (recall=0, precision=1) with threshold above the maximum score.
pub fn pr_curve(scores: &[f64], labels: &[f64]) -> Result<Curve> {
    check_inputs(scores, labels)?;
    let total_pos = labels.iter().filter(|&&y| y > 0.5).count();
    if total_pos == 0 {
        return Err(Error::UndefinedCurve("pr_curve: no positive labels".into()));
    }
    let groups = descending_groups(scores);
    let mut curve = Curve {
        thresholds: vec![f64::INFINITY],
        x: vec![0.0],
        y: vec![1.0],
    };
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (s, g) in &groups {
        for &i in g {
            if labels[i] > 0.5 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        curve.thresholds.push(*s);
        curve.x.push(tp as f64 / total_pos as f64);
        curve.y.push(tp as f64 / (tp + fp) as f64);
    }
    Ok(curve)
}

/// Step-wise (average-precision) integral of a PR curve:
/// sum over points of (R_k - R_{k-1}) * P_k.
pub fn auc_prc(curve: &Curve) -> f64 {
    let mut auc = 0.0;
    for k in 1..curve.x.len() {
        auc += (curve.x[k] - curve.x[k - 1]) * curve.y[k];
    }
    auc
}

/// ROC curve (x = FPR, y = TPR) from (0,0) to (1,1), one point per distinct
/// score.
pub fn roc_curve(scores: &[f64], labels: &[f64]) -> Result<Curve> {
    check_inputs(scores, labels)?;
    let total_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let total_neg = labels.len() - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::UndefinedCurve("roc_curve: single-class labels".into()));
    }
    let groups = descending_groups(scores);
    let mut curve = Curve {
        thresholds: vec![f64::INFINITY],
        x: vec![0.0],
        y: vec![0.0],
    };
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (s, g) in &groups {
        for &i in g {
            if labels[i] > 0.5 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        curve.thresholds.push(*s);
        curve.x.push(fp as f64 / total_neg as f64);
        curve.y.push(tp as f64 / total_pos as f64);
    }
    Ok(curve)
}

/// Trapezoidal AUC; equals the Mann-Whitney pairwise ranking probability
/// with ties counted 1/2.
pub fn auc_roc(curve: &Curve) -> f64 {
    let mut auc = 0.0;
    for k in 1..curve.x.len() {
        auc += (curve.x[k] - curve.x[k - 1]) * 0.5 * (curve.y[k] + curve.y[k - 1]);
    }
    auc
}
