//! Cross-validation, decision-threshold selection and test evaluation.
//!
//! Folds are provider-stratified; every fold model selects its own operating
//! threshold by maximizing G-mean on the held-out fold, and the averaged
//! threshold is what the fold models are scored with on the test split.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics;
use crate::models::{
    train_minnae, train_mlp, MinnAe, MinnConfig, Mlp, MlpConfig, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Provider-stratified k-fold assignment. Every fold receives the same
/// number of providers of each class up to a remainder of one; the overall
/// fold sizes therefore differ by at most one as well.
pub fn make_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Parameter("need at least 2 folds".into()));
    }
    if k > labels.len() {
        return Err(Error::Stratification(format!(
            "{} providers cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut rng = crate::seed::rng_for(seed, "folds");
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    // a class smaller than k degrades to best-effort placement: some folds
    // will simply not receive that class
    if pos.len() < k || neg.len() < k {
        eprintln!(
            "warning: class counts ({} positive, {} negative) below fold count {k}; \
             stratification is best-effort",
            pos.len(),
            neg.len()
        );
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for class in [pos, neg] {
        for i in class {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub gmean: f64,
    /// Set when all scores are identical and the threshold is arbitrary.
    pub degenerate: bool,
}

/// Chooses the decision threshold with the highest G-mean on (scores, labels).
/// Candidates are the distinct scores, the midpoints between adjacent
/// distinct scores, and the endpoints 0 and 1; ties go to the smaller
/// threshold. Constant scores give 0.5 with the degenerate flag set.
pub fn select_threshold(scores: &[f64], labels: &[f64]) -> Result<ThresholdChoice> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Dimension("threshold selection input mismatch".into()));
    }
    let pos = labels.iter().filter(|&&y| y > 0.5).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::ClassCoverage(
            "threshold selection requires both classes".into(),
        ));
    }
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    distinct.dedup();
    if distinct.len() == 1 {
        return Ok(ThresholdChoice {
            threshold: 0.5,
            gmean: metrics::gmean(&metrics::confusion(scores, labels, 0.5)?).0,
            degenerate: true,
        });
    }
    let mut candidates: Vec<f64> = vec![0.0, 1.0];
    candidates.extend_from_slice(&distinct);
    for w in distinct.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite candidates"));
    candidates.dedup();
    let mut best = ThresholdChoice {
        threshold: candidates[0],
        gmean: -1.0,
        degenerate: false,
    };
    for &t in &candidates {
        let (g, _) = metrics::gmean(&metrics::confusion(scores, labels, t)?);
        if g > best.gmean + 1e-15 {
            best.threshold = t;
            best.gmean = g;
        }
    }
    Ok(best)
}

/// Index-level random undersampling: keep all positives and
/// `round(pos / ratio)` negatives. A target at or below the current ratio is
/// the identity.
pub fn undersample_indices(
    indices: &[usize],
    labels: &[f64],
    target_ratio: f64,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if target_ratio <= 0.0 || target_ratio > 1.0 {
        return Err(Error::Parameter(format!(
            "undersample ratio {target_ratio} not in (0,1]"
        )));
    }
    let pos: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] > 0.5).collect();
    let mut neg: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] <= 0.5).collect();
    if pos.is_empty() {
        return Err(Error::ClassCoverage("undersample: no positives".into()));
    }
    let keep_neg = (pos.len() as f64 / target_ratio).round() as usize;
    if keep_neg >= neg.len() {
        return Ok(indices.to_vec());
    }
    neg.shuffle(rng);
    neg.truncate(keep_neg);
    let mut kept: Vec<usize> = pos.into_iter().chain(neg).collect();
    kept.sort_unstable();
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Mlp(MlpConfig),
    MinnAe(MinnConfig),
}

impl ModelSpec {
    pub fn needs_latent(&self) -> bool {
        matches!(self, ModelSpec::MinnAe(_))
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Mlp(Mlp),
    MinnAe(MinnAe),
}

impl TrainedModel {
    pub fn predict(&self, x: &Matrix, latent: Option<&Matrix>) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Mlp(m) => m.predict(x),
            TrainedModel::MinnAe(m) => {
                let l = latent.ok_or_else(|| {
                    Error::Parameter("multi-input model needs the embedding matrix".into())
                })?;
                m.predict(x, l)
            }
        }
    }
}

pub struct FoldModel {
    pub model: TrainedModel,
    pub choice: ThresholdChoice,
    pub val_auc_prc: f64,
    pub history: Vec<crate::models::EpochStats>,
}

pub struct CvResult {
    pub folds: Vec<FoldModel>,
    /// Threshold averaged over folds; the operating point on the test split.
    pub mean_threshold: f64,
    pub mean_val_gmean: f64,
    /// Mean held-out-fold AUC(PRC); the model-selection metric.
    pub mean_val_auc_prc: f64,
}

/// k-fold cross validation over the training split. `latent` must align with
/// `x` row-for-row when the spec is a multi-input model. Folds run in
/// parallel with per-fold derived seeds, so results do not depend on thread
/// scheduling.
pub fn run_cv(
    x: &Matrix,
    latent: Option<&Matrix>,
    y: &[f64],
    spec: &ModelSpec,
    train_cfg: &TrainConfig,
    k: usize,
    rus_ratio: Option<f64>,
    seed: u64,
) -> Result<CvResult> {
    if x.rows() != y.len() {
        return Err(Error::Dimension("label count does not match rows".into()));
    }
    if spec.needs_latent() && latent.is_none() {
        return Err(Error::Parameter("model spec requires embeddings".into()));
    }
    let label_flags: Vec<bool> = y.iter().map(|&v| v > 0.5).collect();
    let folds = make_folds(&label_flags, k, crate::seed::derive_seed(seed, "cv"))?;
    let fold_models: Vec<Result<FoldModel>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let val: &[usize] = &folds[f];
            let mut train: Vec<usize> = (0..k)
                .filter(|&g| g != f)
                .flat_map(|g| folds[g].iter().copied())
                .collect();
            train.sort_unstable();
            let fold_seed = crate::seed::derive_seed(seed, &format!("fold{f}"));
            if let Some(ratio) = rus_ratio {
                let mut rng = crate::seed::rng_for(fold_seed, "rus");
                train = undersample_indices(&train, y, ratio, &mut rng)?;
            }
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let xv = x.select_rows(val);
            let lv = latent.map(|l| l.select_rows(val));
            let yv: Vec<f64> = val.iter().map(|&i| y[i]).collect();
            let (model, history) = match spec {
                ModelSpec::Mlp(cfg) => {
                    let (m, h) =
                        train_mlp(&xt, &yt, cfg, train_cfg, fold_seed, Some((&xv, &yv)))?;
                    (TrainedModel::Mlp(m), h)
                }
                ModelSpec::MinnAe(cfg) => {
                    let lt = latent.expect("checked above").select_rows(&train);
                    let (m, h) = train_minnae(
                        &xt,
                        &lt,
                        &yt,
                        cfg,
                        train_cfg,
                        fold_seed,
                        Some((&xv, lv.as_ref().expect("checked above"), &yv)),
                    )?;
                    (TrainedModel::MinnAe(m), h)
                }
            };
            let scores = model.predict(&xv, lv.as_ref())?;
            let choice = select_threshold(&scores, &yv)?;
            let val_auc_prc = metrics::auc_prc(&metrics::pr_curve(&scores, &yv)?);
            Ok(FoldModel {
                model,
                choice,
                val_auc_prc,
                history,
            })
        })
        .collect();
    let folds: Vec<FoldModel> = fold_models.into_iter().collect::<Result<_>>()?;
    let mean_threshold = folds.iter().map(|f| f.choice.threshold).sum::<f64>() / k as f64;
    let mean_val_gmean = folds.iter().map(|f| f.choice.gmean).sum::<f64>() / k as f64;
    let mean_val_auc_prc = folds.iter().map(|f| f.val_auc_prc).sum::<f64>() / k as f64;
    Ok(CvResult {
        folds,
        mean_threshold,
        mean_val_gmean,
        mean_val_auc_prc,
    })
}

/// Test-split metrics averaged over the fold models: thresholded metrics at
/// the averaged threshold, plus threshold-free areas under the ROC and PR
/// curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub gmean: f64,
    pub auc_roc: f64,
    pub auc_prc: f64,
}

pub fn evaluate_test(
    cv: &CvResult,
    x: &Matrix,
    latent: Option<&Matrix>,
    y: &[f64],
) -> Result<TestMetrics> {
    if x.rows() != y.len() {
        return Err(Error::Dimension("label count does not match rows".into()));
    }
    let t = cv.mean_threshold;
    let mut acc = TestMetrics {
        threshold: t,
        precision: 0.0,
        recall: 0.0,
        gmean: 0.0,
        auc_roc: 0.0,
        auc_prc: 0.0,
    };
    for fold in &cv.folds {
        let scores = fold.model.predict(x, latent)?;
        let c = metrics::confusion(&scores, y, t)?;
        acc.precision += metrics::precision(&c).0;
        acc.recall += metrics::recall(&c).0;
        acc.gmean += metrics::gmean(&c).0;
        acc.auc_roc += metrics::auc_roc(&metrics::roc_curve(&scores, y)?);
        acc.auc_prc += metrics::auc_prc(&metrics::pr_curve(&scores, y)?);
    }
    let k = cv.folds.len() as f64;
    acc.precision /= k;
    acc.recall /= k;
    acc.gmean /= k;
    acc.auc_roc /= k;
    acc.auc_prc /= k;
    Ok(acc)
}

/// Train/test provider leakage is a hard failure, not a warning.
pub fn ensure_disjoint_providers(train: &BTreeSet<String>, test: &BTreeSet<String>) -> Result<()> {
    if let Some(id) = train.intersection(test).next() {
        return Err(Error::Consistency(format!(
            "provider {id} appears in both train and test splits"
        )));
    }
    Ok(())
}

/// One (model, loss) cell of an experiment, serialized into the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: String,
    pub loss: String,
    pub mean_threshold: f64,
    pub mean_val_gmean: f64,
    pub mean_val_auc_prc: f64,
    pub test: TestMetrics,
}

/// Sweep over model specs and losses, selecting the best cell by mean CV
/// AUC(PRC); ties go to the earlier cell. A budget below the grid size
/// evaluates exactly `budget` cells in seeded shuffled order.
pub fn grid_search(
    x: &Matrix,
    latent: Option<&Matrix>,
    y: &[f64],
    specs: &[(String, ModelSpec)],
    loss_names: &[String],
    train_cfg: &TrainConfig,
    k: usize,
    rus_ratio: Option<f64>,
    budget: Option<usize>,
    seed: u64,
) -> Result<(Vec<CellReport>, usize)> {
    let mut grid: Vec<(&String, &ModelSpec, &String)> = Vec::new();
    for (name, spec) in specs {
        for loss in loss_names {
            grid.push((name, spec, loss));
        }
    }
    if grid.is_empty() {
        return Err(Error::Parameter("empty grid".into()));
    }
    if let Some(b) = budget {
        if b == 0 {
            return Err(Error::Parameter("grid budget must be positive".into()));
        }
        if b < grid.len() {
            let mut rng = crate::seed::rng_for(seed, "grid-budget");
            grid.shuffle(&mut rng);
            grid.truncate(b);
        }
    }
    let mut cells = Vec::with_capacity(grid.len());
    for (name, spec, loss) in grid {
        let mut cfg = train_cfg.clone();
        cfg.loss = loss.clone();
        let cell_seed = crate::seed::derive_seed(seed, &format!("grid/{name}/{loss}"));
        let cv = run_cv(x, latent, y, spec, &cfg, k, rus_ratio, cell_seed)?;
        let test = evaluate_test(&cv, x, latent, y)?;
        cells.push(CellReport {
            model: name.clone(),
            loss: loss.clone(),
            mean_threshold: cv.mean_threshold,
            mean_val_gmean: cv.mean_val_gmean,
            mean_val_auc_prc: cv.mean_val_auc_prc,
            test,
        });
    }
    let best = cells
        .iter()
        .enumerate()
        .max_by(|a, b| {
            a.1.mean_val_auc_prc
                .partial_cmp(&b.1.mean_val_auc_prc)
                .expect("finite auc")
                .then(b.0.cmp(&a.0)) // ties to the earlier cell
        })
        .map(|(i, _)| i)
        .expect("nonempty grid");
    Ok((cells, best))
}
