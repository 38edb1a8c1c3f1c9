//! Provider-level splitting, standardization and random undersampling.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Label-stratified provider split. Provider sets are disjoint and claims
/// follow their provider. Providers are processed in sorted-id order so the
/// split depends only on the seed.
pub fn split_by_provider(
    provider_labels: &BTreeMap<String, bool>,
    test_fraction: f64,
    rng: &mut impl Rng,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::Parameter(format!(
            "test fraction {test_fraction} not in (0,1)"
        )));
    }
    let mut train = BTreeSet::new();
    let mut test = BTreeSet::new();
    for class in [false, true] {
        let mut ids: Vec<&String> = provider_labels
            .iter()
            .filter(|(_, &l)| l == class)
            .map(|(id, _)| id)
            .collect();
        if ids.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {class}: {} providers, need at least 2",
                ids.len()
            )));
        }
        ids.shuffle(rng);
        let n_test = ((ids.len() as f64 * test_fraction).round() as usize)
            .clamp(1, ids.len() - 1);
        for (i, id) in ids.into_iter().enumerate() {
            if i < n_test {
                test.insert(id.clone());
            } else {
                train.insert(id.clone());
            }
        }
    }
    Ok((train, test))
}

/// Per-column z-score statistics fit on training data only. Columns with
/// std < 1e-12 are passed through centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit(train: &Matrix) -> Result<Standardizer> {
        if train.rows() == 0 {
            return Err(Error::Parameter("standardizer: empty training data".into()));
        }
        let n = train.rows() as f64;
        let w = train.cols();
        let mut mean = vec![0.0; w];
        for r in 0..train.rows() {
            for (m, v) in mean.iter_mut().zip(train.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; w];
        for r in 0..train.rows() {
            for c in 0..w {
                let d = train.get(r, c) - mean[c];
                var[c] += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    /// Fits on the rows of a masked sequence corpus: only present
    /// (provider, quarter) entries contribute.
    pub fn fit_rows(rows: &[&[f64]]) -> Result<Standardizer> {
        if rows.is_empty() {
            return Err(Error::Parameter("standardizer: empty training data".into()));
        }
        let w = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; w];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; w];
        for row in rows {
            for c in 0..w {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().enumerate() {
            *v -= self.mean[c];
            if self.std[c] >= STD_FLOOR {
                *v /= self.std[c];
            }
        }
    }

    pub fn apply(&self, m: &mut Matrix) -> Result<()> {
        if m.cols() != self.mean.len() {
            return Err(Error::Dimension("standardizer width mismatch".into()));
        }
        for r in 0..m.rows() {
            self.apply_row(m.row_mut(r));
        }
        Ok(())
    }

    /// Inverse transform; exact on non-degenerate columns.
    pub fn invert_row(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().enumerate() {
            if self.std[c] >= STD_FLOOR {
                *v *= self.std[c];
            }
            *v += self.mean[c];
        }
    }
}

/// Uniform provider-level undersampling of the negative class. Positives are
/// untouched; negatives are subsampled without replacement so that
/// positives/negatives == target_ratio.
pub fn random_undersample(
    provider_labels: &BTreeMap<String, bool>,
    target_ratio: f64,
    rng: &mut impl Rng,
) -> Result<BTreeSet<String>> {
    if target_ratio <= 0.0 || target_ratio > 1.0 {
        return Err(Error::Parameter(format!(
            "undersample ratio {target_ratio} not in (0,1]"
        )));
    }
    let pos: Vec<&String> = provider_labels
        .iter()
        .filter(|(_, &l)| l)
        .map(|(id, _)| id)
        .collect();
    let mut neg: Vec<&String> = provider_labels
        .iter()
        .filter(|(_, &l)| !l)
        .map(|(id, _)| id)
        .collect();
    let keep_neg = (pos.len() as f64 / target_ratio).round() as usize;
    if keep_neg == 0 {
        return Err(Error::Parameter(
            "undersample: no positive providers".into(),
        ));
    }
    let mut kept: BTreeSet<String> = pos.into_iter().cloned().collect();
    if keep_neg >= neg.len() {
        // target ratio at or below the current ratio: identity
        kept.extend(neg.into_iter().cloned());
        return Ok(kept);
    }
    neg.shuffle(rng);
    kept.extend(neg.into_iter().take(keep_neg).cloned());
    Ok(kept)
}
