//! End-to-end experiment driver and report artifacts.
//!
//! A run reads the four claims CSVs, builds provider features and quarterly
//! sequences, trains the sequence autoencoder once, then cross-validates the
//! model zoo (five baseline MLP architectures plus the multi-input model)
//! and evaluates every fold model on the held-out provider test split.
//!
//! `report.json` is fully deterministic for a fixed seed; wall-clock timings
//! go to a separate `timings.json` so that reproducibility checks can diff
//! the report byte-for-byte.

use crate::config::{DataConfig, ExperimentConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::linalg::SequenceBatch;
use crate::metrics;
use crate::models::{
    train_autoencoder, write_history_csv, EpochStats, LstmAutoencoder, MlpConfig, TrainConfig,
};
use crate::pipeline::{
    build_feature_matrix, bucketize_all, label_providers, merge_claims, propagate_labels,
    read_claims_csv, read_leie_csv, read_providers_csv, split_by_provider, ClaimsTable,
    ColumnMap, FeatureMatrix, ProviderSequence, Source, Standardizer, StudyWindow, Vocab,
};
use crate::training::{ensure_disjoint_providers, evaluate_test, run_cv, CellReport, ModelSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub const REPORT_VERSION: u32 = 1;

/// Everything the pipeline produces before any model sees the data.
pub struct LoadedData {
    pub table: ClaimsTable,
    pub sequences: BTreeMap<String, ProviderSequence>,
    pub vocab: Vocab,
    pub window: StudyWindow,
    pub features: FeatureMatrix,
}

/// Reads inpatient.csv, outpatient.csv, providers.csv and leie.csv from
/// `dir`, labels providers from the exclusion list and assembles the static
/// feature matrix plus quarterly sequences.
pub fn load_from_dir(dir: &Path, cfg: &DataConfig, include_provider_features: bool) -> Result<LoadedData> {
    let map = ColumnMap::default();
    let inpatient = read_claims_csv(&dir.join("inpatient.csv"), &map, Source::Inpatient)?;
    let outpatient = read_claims_csv(&dir.join("outpatient.csv"), &map, Source::Outpatient)?;
    let providers = read_providers_csv(&dir.join("providers.csv"), &map)?;
    let leie = read_leie_csv(&dir.join("leie.csv"), &map)?;
    let mut table = merge_claims(inpatient, outpatient, providers)?;
    let cutoff = cfg
        .label_cutoff
        .as_deref()
        .map(|s| chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d"))
        .transpose()
        .map_err(|e| Error::Config(format!("data.label_cutoff: {e}")))?;
    let labels = label_providers(&table, &leie, cutoff);
    propagate_labels(&labels, &mut table)?;
    let window = StudyWindow {
        start_year: cfg.start_year,
        years: cfg.years,
    };
    let sequences = bucketize_all(&table, &window)?;
    let vocab = Vocab::collect(&table);
    let features = build_feature_matrix(&table, &sequences, &vocab, &window, include_provider_features)?;
    Ok(LoadedData {
        table,
        sequences,
        vocab,
        window,
        features,
    })
}

/// Stacks provider sequences into one batch, ordered like `ids`.
pub fn sequence_batch(
    ids: &[String],
    sequences: &BTreeMap<String, ProviderSequence>,
) -> Result<SequenceBatch> {
    let first = ids
        .first()
        .and_then(|id| sequences.get(id))
        .ok_or_else(|| Error::Parameter("no sequences to stack".into()))?;
    let steps = first.quarters.len();
    let width = first.quarters[0].len();
    let mut batch = SequenceBatch::zeros(ids.len(), steps, width);
    for (b, id) in ids.iter().enumerate() {
        let seq = sequences
            .get(id)
            .ok_or_else(|| Error::Consistency(format!("provider {id} has no sequence")))?;
        if seq.quarters.len() != steps || seq.quarters[0].len() != width {
            return Err(Error::Dimension(format!("provider {id}: sequence shape mismatch")));
        }
        for t in 0..steps {
            batch.set_present(b, t, seq.mask[t]);
            for f in 0..width {
                batch.set(b, t, f, seq.quarters[t][f]);
            }
        }
    }
    Ok(batch)
}

/// Fits a z-score standardizer on the present steps of the training
/// providers and applies it to every present step of `batch`.
pub fn standardize_sequences(
    batch: &mut SequenceBatch,
    train_rows: &[usize],
) -> Result<Standardizer> {
    let mut rows: Vec<&[f64]> = Vec::new();
    let width = batch.features();
    let data = batch.data();
    let mut owned: Vec<Vec<f64>> = Vec::new();
    for &b in train_rows {
        for t in 0..batch.steps() {
            if batch.present(b, t) {
                let start = (b * batch.steps() + t) * width;
                owned.push(data[start..start + width].to_vec());
            }
        }
    }
    for row in &owned {
        rows.push(row);
    }
    let std = Standardizer::fit_rows(&rows)?;
    for b in 0..batch.batch() {
        for t in 0..batch.steps() {
            if batch.present(b, t) {
                let mut row: Vec<f64> = (0..width).map(|f| batch.get(b, t, f)).collect();
                std.apply_row(&mut row);
                for (f, v) in row.into_iter().enumerate() {
                    batch.set(b, t, f, v);
                }
            }
        }
    }
    Ok(std)
}

/// The six default experiments: the paper's five baseline architectures and
/// the multi-input model.
pub fn default_model_zoo(cfg: &ModelConfig) -> Vec<(String, ModelSpec)> {
    let archs: [(&str, &[usize]); 5] = [
        ("bnn_45_25", &[45, 25]),
        ("bnn_30_15", &[30, 15]),
        ("bnn_30_12", &[30, 12]),
        ("bnn_25_10", &[25, 10]),
        ("bnn_15_5", &[15, 5]),
    ];
    let mut zoo: Vec<(String, ModelSpec)> = archs
        .iter()
        .map(|(name, hidden)| {
            (
                (*name).to_string(),
                ModelSpec::Mlp(MlpConfig {
                    hidden: hidden.to_vec(),
                    dropout: cfg.mlp.dropout,
                }),
            )
        })
        .collect();
    zoo.push(("minn_ae".to_string(), ModelSpec::MinnAe(cfg.minn.clone())));
    zoo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub n_providers: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub prevalence_test: f64,
    pub cells: Vec<CellReport>,
}

/// Deterministic outputs of one run that the CLI writes to disk.
pub struct RunArtifacts {
    pub ae: LstmAutoencoder,
    pub ae_history: Vec<EpochStats>,
    pub standardizer: Standardizer,
    pub seq_standardizer: Standardizer,
    pub vocab: Vocab,
    /// Per model: fold histories and test-set scores of the first fold model.
    pub per_model: Vec<ModelArtifacts>,
    pub test_labels: Vec<f64>,
    /// Provider id of each test claim, aligned with `test_labels`.
    pub test_provider_ids: Vec<String>,
    pub seq_features: usize,
    pub static_width: usize,
    pub latent_width: usize,
}

pub struct ModelArtifacts {
    pub name: String,
    pub spec: ModelSpec,
    pub histories: Vec<Vec<EpochStats>>,
    pub fold0_test_scores: Vec<f64>,
    pub fold0_tensors: Vec<(String, Vec<f64>)>,
    pub threshold: f64,
}

/// Wall-clock timings, reported separately from the deterministic report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTimings {
    pub total_seconds: f64,
    pub per_model_seconds: Vec<(String, f64)>,
}

/// Runs the full experiment on already-loaded data.
pub fn run_experiment(cfg: &ExperimentConfig, data: &LoadedData) -> Result<(RunReport, RunArtifacts, RunTimings)> {
    let t0 = Instant::now();
    let seed = cfg.seed;
    let features = &data.features;
    let n = features.provider_ids.len();
    let provider_labels: BTreeMap<String, bool> = features
        .provider_ids
        .iter()
        .zip(&features.labels)
        .map(|(id, &l)| (id.clone(), l > 0.5))
        .collect();
    let mut split_rng = crate::seed::rng_for(seed, "split");
    let (train_set, test_set) = split_by_provider(&provider_labels, cfg.cv.test_fraction, &mut split_rng)?;
    ensure_disjoint_providers(&train_set, &test_set)?;
    let train_idx: Vec<usize> = (0..n)
        .filter(|&i| train_set.contains(&features.provider_ids[i]))
        .collect();
    let test_idx: Vec<usize> = (0..n)
        .filter(|&i| test_set.contains(&features.provider_ids[i]))
        .collect();

    // standardize static features on the training providers only
    let train_static = features.rows.select_rows(&train_idx);
    let standardizer = Standardizer::fit(&train_static)?;
    let mut x_all = features.rows.clone();
    standardizer.apply(&mut x_all)?;

    // standardize sequences the same way, then train the autoencoder once on
    // the unique training providers (claim rows share their provider's latent)
    let prov_ids: Vec<String> = provider_labels.keys().cloned().collect();
    let prov_pos: BTreeMap<&str, usize> = prov_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let train_prov_idx: Vec<usize> = prov_ids
        .iter()
        .enumerate()
        .filter(|(_, id)| train_set.contains(*id))
        .map(|(i, _)| i)
        .collect();
    let mut prov_seqs = sequence_batch(&prov_ids, &data.sequences)?;
    let seq_standardizer = standardize_sequences(&mut prov_seqs, &train_prov_idx)?;
    let ae_cfg = &cfg.model.ae;
    let ae_tc = TrainConfig {
        epochs: 30,
        loss: "mse".into(),
        // The provider corpus is far smaller than the claim table, so the
        // autoencoder uses a smaller batch to get enough optimizer steps.
        batch_size: 64,
        ..cfg.training.clone()
    };
    let train_seqs = prov_seqs.select_samples(&train_prov_idx);
    let (ae, ae_history) = train_autoencoder(&train_seqs, ae_cfg, &ae_tc, crate::seed::derive_seed(seed, "ae"))?;
    let latent_prov = ae.encode(&prov_seqs)?;
    let claim_prov_idx: Vec<usize> = features
        .provider_ids
        .iter()
        .map(|id| prov_pos[id.as_str()])
        .collect();
    let latent_all = latent_prov.select_rows(&claim_prov_idx);

    let x_train = x_all.select_rows(&train_idx);
    let y_train: Vec<f64> = train_idx.iter().map(|&i| features.labels[i]).collect();
    let l_train = latent_all.select_rows(&train_idx);
    let x_test = x_all.select_rows(&test_idx);
    let y_test: Vec<f64> = test_idx.iter().map(|&i| features.labels[i]).collect();
    let l_test = latent_all.select_rows(&test_idx);

    let zoo = default_model_zoo(&cfg.model);
    let mut cells = Vec::with_capacity(zoo.len());
    let mut per_model = Vec::with_capacity(zoo.len());
    let mut per_model_seconds = Vec::with_capacity(zoo.len());
    for (name, spec) in &zoo {
        let tm = Instant::now();
        let latent_train = spec.needs_latent().then_some(&l_train);
        let latent_test = spec.needs_latent().then_some(&l_test);
        let cv = run_cv(
            &x_train,
            latent_train,
            &y_train,
            spec,
            &cfg.training,
            cfg.cv.folds,
            cfg.resampling.rus_ratio,
            crate::seed::derive_seed(seed, &format!("model/{name}")),
        )?;
        let test = evaluate_test(&cv, &x_test, latent_test, &y_test)?;
        cells.push(CellReport {
            model: name.clone(),
            loss: cfg.training.loss.clone(),
            mean_threshold: cv.mean_threshold,
            mean_val_gmean: cv.mean_val_gmean,
            mean_val_auc_prc: cv.mean_val_auc_prc,
            test,
        });
        let fold0 = &cv.folds[0];
        per_model.push(ModelArtifacts {
            name: name.clone(),
            spec: spec.clone(),
            histories: cv.folds.iter().map(|f| f.history.clone()).collect(),
            fold0_test_scores: fold0.model.predict(&x_test, latent_test)?,
            fold0_tensors: match &fold0.model {
                crate::training::TrainedModel::Mlp(m) => m.tensors(),
                crate::training::TrainedModel::MinnAe(m) => m.tensors(),
            },
            threshold: cv.mean_threshold,
        });
        per_model_seconds.push((name.clone(), tm.elapsed().as_secs_f64()));
    }

    let prevalence_test = y_test.iter().sum::<f64>() / y_test.len() as f64;
    let report = RunReport {
        version: REPORT_VERSION,
        seed,
        config_hash: cfg.content_hash(),
        n_providers: n,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        prevalence_test,
        cells,
    };
    let seq_features = prov_seqs.features();
    let static_width = x_all.cols();
    let latent_width = latent_all.cols();
    let artifacts = RunArtifacts {
        ae,
        ae_history,
        standardizer,
        seq_standardizer,
        vocab: data.vocab.clone(),
        per_model,
        test_labels: y_test,
        test_provider_ids: test_idx
            .iter()
            .map(|&i| features.provider_ids[i].clone())
            .collect(),
        seq_features,
        static_width,
        latent_width,
    };
    let timings = RunTimings {
        total_seconds: t0.elapsed().as_secs_f64(),
        per_model_seconds,
    };
    Ok((report, artifacts, timings))
}

/// Writes report.json, timings.json, checkpoints, fold histories and test
/// curves. Everything except timings.json is deterministic for a fixed seed.
pub fn write_artifacts(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    report: &RunReport,
    artifacts: &RunArtifacts,
    timings: &RunTimings,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    std::fs::write(
        out_dir.join("timings.json"),
        serde_json::to_string_pretty(timings)?,
    )?;
    let base_meta = serde_json::json!({
        "seed": report.seed,
        "config_hash": report.config_hash,
        "standardizer": artifacts.standardizer,
        "seq_standardizer": artifacts.seq_standardizer,
        "vocab": artifacts.vocab,
    });
    let mut ae_meta = base_meta.clone();
    ae_meta["model"] = serde_json::json!({
        "kind": "lstm_autoencoder",
        "config": cfg.model.ae,
        "features": artifacts.seq_features,
    });
    crate::checkpoint::Checkpoint::new(ae_meta, artifacts.ae.tensors())
        .save(&out_dir.join("ae.ckpt"))?;
    {
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(out_dir.join("ae_history.csv"))?);
        write_history_csv(&mut out, &artifacts.ae_history)?;
    }
    for (m, cell) in artifacts.per_model.iter().zip(&report.cells) {
        let mut meta = base_meta.clone();
        meta["model"] = serde_json::json!({
            "kind": m.name,
            "loss": cell.loss,
            "spec": m.spec,
            "static_width": artifacts.static_width,
            "latent_width": artifacts.latent_width,
        });
        meta["threshold"] = serde_json::json!(m.threshold);
        crate::checkpoint::Checkpoint::new(meta, m.fold0_tensors.clone())
            .save(&out_dir.join(format!("{}.ckpt", m.name)))?;
        for (f, h) in m.histories.iter().enumerate() {
            let path = out_dir.join(format!("{}_fold{f}_history.csv", m.name));
            let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
            write_history_csv(&mut out, h)?;
        }
        let roc = metrics::roc_curve(&m.fold0_test_scores, &artifacts.test_labels)?;
        let pr = metrics::pr_curve(&m.fold0_test_scores, &artifacts.test_labels)?;
        let mut roc_out =
            std::io::BufWriter::new(std::fs::File::create(out_dir.join(format!("{}_roc.csv", m.name)))?);
        roc.write_csv(&mut roc_out)?;
        let mut pr_out =
            std::io::BufWriter::new(std::fs::File::create(out_dir.join(format!("{}_prc.csv", m.name)))?);
        pr.write_csv(&mut pr_out)?;
    }
    Ok(())
}

/// Consolidated comparison table across runs: one row per model with the
/// metric columns Precision, AUC(ROC), Gmean, AUC(PRC) plus wall time.
/// Metrics are averaged over the runs (e.g. three master seeds).
pub fn comparison_table(reports: &[RunReport], timings: &[RunTimings]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Parameter("no reports to consolidate".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, (f64, f64, f64, f64, f64, usize)> = BTreeMap::new();
    for report in reports {
        for cell in &report.cells {
            if !acc.contains_key(&cell.model) {
                order.push(cell.model.clone());
            }
            let e = acc.entry(cell.model.clone()).or_insert((0.0, 0.0, 0.0, 0.0, 0.0, 0));
            e.0 += cell.test.precision;
            e.1 += cell.test.auc_roc;
            e.2 += cell.test.gmean;
            e.3 += cell.test.auc_prc;
            e.5 += 1;
        }
    }
    for t in timings {
        for (name, secs) in &t.per_model_seconds {
            if let Some(e) = acc.get_mut(name) {
                e.4 += secs;
            }
        }
    }
    let mut out = String::from("model,precision,auc_roc,gmean,auc_prc,time_s\n");
    for name in order {
        let (p, roc, g, prc, secs, k) = acc[&name];
        let k = k as f64;
        out.push_str(&format!(
            "{name},{:.4},{:.4},{:.4},{:.4},{:.1}\n",
            p / k,
            roc / k,
            g / k,
            prc / k,
            secs / k
        ));
    }
    Ok(out)
}
