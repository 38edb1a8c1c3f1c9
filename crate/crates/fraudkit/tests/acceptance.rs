//! Acceptance gate: one test per criterion, each printing a single
//! `criterion N (...): PASS` line on success (visible with `--nocapture`).
//!
//! Criteria 6-10 share seeded full experiments on the default corpus (5,000
//! providers, fraud rate 0.005, 3 years); those runs are cached per master
//! seed so the suite trains each one only once.

mod common;

use common::{max_rel_error, project};
use fraudkit::config::ExperimentConfig;
use fraudkit::linalg::{Matrix, SequenceBatch};
use fraudkit::losses::{self, ClassWeights, FocalParams};
use fraudkit::metrics::{auc_prc, auc_roc, confusion, gmean, pr_curve, roc_curve};
use fraudkit::models::train_minnae;
use fraudkit::nn::{glorot_uniform, BatchNorm, Dense, Lstm};
use fraudkit::pipeline::split_by_provider;
use fraudkit::report::{
    load_from_dir, run_experiment, sequence_batch, write_artifacts, LoadedData, RunArtifacts,
    RunReport, RunTimings,
};
use fraudkit::training::select_threshold;
use fraudkit::{clustering, synth};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

// ---------------------------------------------------------------- shared runs

struct FullRun {
    cfg: ExperimentConfig,
    data: LoadedData,
    report: RunReport,
    artifacts: RunArtifacts,
    timings: RunTimings,
    data_dir: tempfile::TempDir,
}

fn default_cfg(seed: u64) -> ExperimentConfig {
    ExperimentConfig::parse(&format!("seed = {seed}")).unwrap()
}

fn execute_run(cfg: &ExperimentConfig) -> FullRun {
    let data_dir = tempfile::tempdir().unwrap();
    let mut synth_cfg = cfg.synth.clone();
    synth_cfg.seed = cfg.seed;
    let corpus = synth::generate(&synth_cfg).unwrap();
    corpus.write_csvs(data_dir.path()).unwrap();
    let data = load_from_dir(data_dir.path(), &cfg.data, cfg.model.provider_features).unwrap();
    let (report, artifacts, timings) = run_experiment(cfg, &data).unwrap();
    FullRun {
        cfg: cfg.clone(),
        data,
        report,
        artifacts,
        timings,
        data_dir,
    }
}

fn cached_run(seed: u64) -> &'static FullRun {
    static RUNS: OnceLock<Mutex<BTreeMap<u64, &'static FullRun>>> = OnceLock::new();
    let runs = RUNS.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut guard = runs.lock().unwrap();
    if let Some(run) = guard.get(&seed) {
        return run;
    }
    let run: &'static FullRun = Box::leak(Box::new(execute_run(&default_cfg(seed))));
    guard.insert(seed, run);
    run
}

const SEEDS: [u64; 3] = [1, 2, 3];

// --------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2001);
    let tol = 1e-4;
    let rv = |rng: &mut ChaCha20Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
    };
    let mut instances = 0usize;
    for _ in 0..40 {
        // dense
        let (b, fi, fo) = (rng.gen_range(1..5), rng.gen_range(1..6), rng.gen_range(1..6));
        let x = Matrix::from_vec(b, fi, rv(&mut rng, b * fi)).unwrap();
        let w = glorot_uniform(fi, fo, &mut rng);
        let bias = rv(&mut rng, fo);
        let proj = Matrix::from_vec(b, fo, rv(&mut rng, b * fo)).unwrap();
        let dense = Dense::new(w.clone(), bias.clone()).unwrap();
        let (gx, grads) = dense.backward(&x, &proj).unwrap();
        let mut f = |wf: &[f64]| {
            let l = Dense::new(Matrix::from_vec(fi, fo, wf.to_vec()).unwrap(), bias.clone())
                .unwrap();
            project(&l.forward(&x).unwrap(), &proj)
        };
        assert!(max_rel_error(&mut f, w.data(), grads.weights.data()) < tol);
        let mut f = |xf: &[f64]| {
            let xm = Matrix::from_vec(b, fi, xf.to_vec()).unwrap();
            project(&dense.forward(&xm).unwrap(), &proj)
        };
        assert!(max_rel_error(&mut f, x.data(), gx.data()) < tol);
        instances += 2;

        // batchnorm, train mode
        let (b, wd) = (rng.gen_range(2..6), rng.gen_range(1..5));
        let x = Matrix::from_vec(b, wd, rv(&mut rng, b * wd)).unwrap();
        let mut bn = BatchNorm::new(wd, 0.99, 1e-5).unwrap();
        bn.gamma = (0..wd).map(|_| rng.gen_range(0.5..1.5)).collect();
        let proj = Matrix::from_vec(b, wd, rv(&mut rng, b * wd)).unwrap();
        let (_, cache) = bn.forward_train(&x).unwrap();
        let (gx, g_gamma, _) = bn.backward(&cache, &proj).unwrap();
        let mut f = |xf: &[f64]| {
            let xm = Matrix::from_vec(b, wd, xf.to_vec()).unwrap();
            project(&bn.forward_train(&xm).unwrap().0, &proj)
        };
        assert!(max_rel_error(&mut f, x.data(), gx.data()) < tol);
        let gamma = bn.gamma.clone();
        let mut f = |gf: &[f64]| {
            let mut b2 = bn.clone();
            b2.gamma = gf.to_vec();
            project(&b2.forward_train(&x).unwrap().0, &proj)
        };
        assert!(max_rel_error(&mut f, &gamma, &g_gamma) < tol);
        instances += 2;

        // lstm with a masked step
        let (b, t, fi, h) = (2, 3, 2, 2);
        let w = glorot_uniform(fi, 4 * h, &mut rng);
        let u = glorot_uniform(h, 4 * h, &mut rng);
        let bias = rv(&mut rng, 4 * h);
        let data = rv(&mut rng, b * t * fi);
        let mut mask = vec![true; b * t];
        mask[t + 1] = rng.gen_bool(0.5);
        let proj_last = Matrix::from_vec(b, h, rv(&mut rng, b * h)).unwrap();
        let loss = |w: &Matrix, data: &[f64]| {
            let lstm = Lstm::new(w.clone(), u.clone(), bias.clone()).unwrap();
            let s = SequenceBatch::new(b, t, fi, data.to_vec(), mask.clone()).unwrap();
            let (_, _, last) = lstm.forward(&s).unwrap();
            project(&last, &proj_last)
        };
        let lstm = Lstm::new(w.clone(), u.clone(), bias.clone()).unwrap();
        let seq = SequenceBatch::new(b, t, fi, data.clone(), mask.clone()).unwrap();
        let (cache, _, _) = lstm.forward(&seq).unwrap();
        let (gin, grads) = lstm.backward(&seq, &cache, None, Some(&proj_last)).unwrap();
        let mut f = |wf: &[f64]| loss(&Matrix::from_vec(fi, 4 * h, wf.to_vec()).unwrap(), &data);
        assert!(max_rel_error(&mut f, w.data(), grads.w.data()) < tol);
        let mut f = |df: &[f64]| loss(&w, df);
        assert!(max_rel_error(&mut f, &data, gin.data()) < tol);
        instances += 2;
    }
    // losses
    type LossFn = Box<dyn Fn(&[f64], &[f64]) -> (f64, Vec<f64>)>;
    let cases: Vec<LossFn> = vec![
        Box::new(|p, y| losses::bce(p, y).unwrap()),
        Box::new(|p, y| losses::weighted_bce(p, y, ClassWeights { w0: 0.7, w1: 4.0 }).unwrap()),
        Box::new(|p, y| losses::focal_loss(p, y, FocalParams::default()).unwrap()),
        Box::new(|p, y| losses::mse(p, y).unwrap()),
        Box::new(|p, y| losses::mfe(p, y).unwrap()),
        Box::new(|p, y| losses::msfe(p, y).unwrap()),
    ];
    for f in &cases {
        for _ in 0..25 {
            let n = rng.gen_range(2..30);
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let mut y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
            y[0] = 1.0;
            y[n - 1] = 0.0;
            let (_, grad) = f(&p, &y);
            let mut g = |pf: &[f64]| f(pf, &y).0;
            assert!(max_rel_error(&mut g, &p, &grad) < tol);
            instances += 1;
        }
    }
    assert!(instances >= 100);
    assert!(start.elapsed().as_secs() < 60, "gradient checks exceeded 1 min");
    println!("criterion 1 (gradient correctness): PASS");
}

// --------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_loss_identities() {
    let mut rng = ChaCha20Rng::seed_from_u64(2002);
    for _ in 0..50 {
        let n = rng.gen_range(2..40);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
        let mut y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        y[0] = 1.0;
        y[n - 1] = 0.0;

        let (b, gb) = losses::bce(&p, &y).unwrap();
        let (f, gf) =
            losses::focal_loss(&p, &y, FocalParams { alpha: 1.0, gamma: 0.0 }).unwrap();
        assert!((b - f).abs() <= 1e-12);
        for (a, c) in gb.iter().zip(&gf) {
            assert!((a - c).abs() <= 1e-12);
        }

        let (w, _) = losses::weighted_bce(&p, &y, ClassWeights { w0: 1.0, w1: 1.0 }).unwrap();
        assert!((b - w).abs() <= 1e-12);

        // balanced batch: mfe == 2 * mse
        let m = n - (n % 2);
        let pb = &p[..m];
        let yb: Vec<f64> = (0..m).map(|i| f64::from(i % 2 == 0)).collect();
        let (mfe, _) = losses::mfe(pb, &yb).unwrap();
        let (mse, _) = losses::mse(pb, &yb).unwrap();
        assert!((mfe - 2.0 * mse).abs() <= 1e-12);
    }

    let w = losses::class_weights(10, 990).unwrap();
    assert!((w.w0 - 500.0 / 990.0).abs() <= 1e-12);
    assert!((w.w1 - 50.0).abs() <= 1e-12);
    println!("criterion 2 (loss identities): PASS");
}

// --------------------------------------------------------------- criterion 3

fn random_scored_instance(rng: &mut ChaCha20Rng, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let n = rng.gen_range(2..=max_n);
        let levels = rng.gen_range(2..=40);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..levels) as f64 / (levels - 1) as f64)
            .collect();
        let p = rng.gen_range(0.05..0.95);
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(p))).collect();
        let pos = labels.iter().filter(|&&y| y > 0.5).count();
        if pos > 0 && pos < n {
            return (scores, labels);
        }
    }
}

#[test]
fn criterion_3_metric_oracles() {
    let mut rng = ChaCha20Rng::seed_from_u64(2003);
    for _ in 0..1000 {
        let (scores, labels) = random_scored_instance(&mut rng, 1000);

        // Mann-Whitney all-pairs oracle
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if yi <= 0.5 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj > 0.5 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        let roc = roc_curve(&scores, &labels).unwrap();
        assert!((auc_roc(&roc) - wins / pairs).abs() <= 1e-9);

        // exhaustive threshold sweep oracle for average precision
        let total_pos = labels.iter().filter(|&&y| y > 0.5).count() as f64;
        let mut distinct = scores.clone();
        distinct.sort_by(|a, b| b.partial_cmp(a).unwrap());
        distinct.dedup();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for t in distinct {
            let tp = scores
                .iter()
                .zip(&labels)
                .filter(|(&s, &y)| s >= t && y > 0.5)
                .count() as f64;
            let pp = scores.iter().filter(|&&s| s >= t).count() as f64;
            ap += (tp / total_pos - prev_recall) * (tp / pp);
            prev_recall = tp / total_pos;
        }
        let pr = pr_curve(&scores, &labels).unwrap();
        assert!((auc_prc(&pr) - ap).abs() <= 1e-9);
    }

    // constant scores: exact prevalence and exact 1/2
    let labels = [1.0, 0.0, 0.0, 0.0, 1.0];
    let scores = [0.3; 5];
    assert_eq!(auc_prc(&pr_curve(&scores, &labels).unwrap()), 0.4);
    assert_eq!(auc_roc(&roc_curve(&scores, &labels).unwrap()), 0.5);
    println!("criterion 3 (metric oracles): PASS");
}

// --------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_threshold_selection() {
    let mut rng = ChaCha20Rng::seed_from_u64(2004);
    for _ in 0..200 {
        let (scores, labels) = random_scored_instance(&mut rng, 10_000);
        let mut candidates = scores.clone();
        candidates.push(0.0);
        candidates.push(1.0);
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        candidates.dedup();
        let mut best = 0.0f64;
        for &t in &candidates {
            best = best.max(gmean(&confusion(&scores, &labels, t).unwrap()).0);
        }
        let choice = select_threshold(&scores, &labels).unwrap();
        let achieved = gmean(&confusion(&scores, &labels, choice.threshold).unwrap()).0;
        assert!((achieved - best).abs() <= 1e-12);
    }
    println!("criterion 4 (threshold selection): PASS");
}

// --------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_pipeline_integrity() {
    // disjoint splits and exact label propagation across seeds
    for seed in 0..5u64 {
        let mut rng = fraudkit::seed::rng_for(seed, "split");
        let labels: BTreeMap<String, bool> = (0..200)
            .map(|i| (format!("p{i:03}"), i % 23 == 0))
            .collect();
        let (train, test) = split_by_provider(&labels, 0.2, &mut rng).unwrap();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 200);
    }
    let run = cached_run(SEEDS[0]);
    let features = &run.data.features;
    for (id, &label) in features.provider_ids.iter().zip(&features.labels) {
        let seq = &run.data.sequences[id];
        assert_eq!(seq.label, label > 0.5, "claim label != provider label for {id}");
    }

    // 20-claim fixture: quarterly stats against hand-computed moments
    let vals = [100.0, 250.5, 75.25, 310.0];
    let s = fraudkit::pipeline::first_order_stats(&vals);
    let expected = [
        183.9375,
        98.970_698_788_833_46,
        9_795.199_218_75,
        735.75,
        310.0,
        75.25,
        0.109_073_370_191_208_52,
        -1.797_856_198_645_640_1,
    ];
    for (a, e) in s.iter().zip(&expected) {
        assert!((a - e).abs() <= 1e-10);
    }
    // the full 20-claim fixture lives in tests/pipeline_fixture.rs; re-assert
    // the degenerate rules here so this criterion stands alone
    let c = fraudkit::pipeline::first_order_stats(&[70.0, 70.0, 70.0]);
    assert_eq!(&c[1..3], &[0.0, 0.0]);
    assert_eq!(&c[6..8], &[0.0, 0.0]);
    println!("criterion 5 (pipeline integrity): PASS");
}

// --------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_directional_reproduction() {
    let runs: Vec<&FullRun> = SEEDS.iter().map(|&s| cached_run(s)).collect();
    let names: Vec<String> = runs[0].report.cells.iter().map(|c| c.model.clone()).collect();
    let mean = |f: &dyn Fn(&FullRun, usize) -> f64, m: usize| -> f64 {
        runs.iter().map(|r| f(r, m)).sum::<f64>() / runs.len() as f64
    };

    // (a) every model's mean AUC(PRC) >= 10x prevalence
    let prevalence = mean(&|r, _| r.report.prevalence_test, 0);
    for (m, name) in names.iter().enumerate() {
        let auc = mean(&|r, m| r.report.cells[m].test.auc_prc, m);
        assert!(
            auc >= 10.0 * prevalence,
            "{name}: mean AUC(PRC) {auc:.4} < 10x prevalence {:.4}",
            10.0 * prevalence
        );
    }

    // (b) MINN-AE beats every baseline by >= 0.02 absolute on the seed mean
    let minn = names.iter().position(|n| n == "minn_ae").unwrap();
    let minn_auc = mean(&|r, m| r.report.cells[m].test.auc_prc, minn);
    for (m, name) in names.iter().enumerate() {
        if m == minn {
            continue;
        }
        let auc = mean(&|r, m| r.report.cells[m].test.auc_prc, m);
        assert!(
            minn_auc >= auc + 0.02,
            "minn_ae {minn_auc:.4} does not exceed {name} {auc:.4} by 0.02"
        );
    }

    // (c) MINN-AE precision is highest in >= 2 of 3 seeds
    let wins = runs
        .iter()
        .filter(|r| {
            let p = r.report.cells[minn].test.precision;
            r.report
                .cells
                .iter()
                .enumerate()
                .all(|(m, c)| m == minn || c.test.precision < p)
        })
        .count();
    assert!(wins >= 2, "minn_ae precision won only {wins} of {} seeds", runs.len());

    // runtime budget over the three full experiments
    let total: f64 = runs.iter().map(|r| r.timings.total_seconds).sum();
    assert!(total < 1800.0, "3-seed experiment took {total:.0}s (budget 1800s)");
    println!(
        "criterion 6 (directional reproduction): PASS (minn_ae {minn_auc:.3}, total {total:.0}s)"
    );
}

// --------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_null_signal_control() {
    let mut cfg = default_cfg(1);
    cfg.synth.amount_inflation = 1.0;
    cfg.synth.volume_inflation = 1.0;
    cfg.synth.burstiness = 1.0;
    let run = execute_run(&cfg);
    let prevalence = run.report.prevalence_test;

    // Standard error of AUC(PRC) under the null, from label permutations.
    // Labels are assigned per provider and propagated to claims, so the
    // exchangeable unit is the provider: permute provider labels and
    // propagate, preserving within-provider score correlation.
    let labels = &run.artifacts.test_labels;
    let prov_ids = &run.artifacts.test_provider_ids;
    let mut prov_label: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, &y) in prov_ids.iter().zip(labels) {
        prov_label.insert(id, y);
    }
    let providers: Vec<&str> = prov_label.keys().copied().collect();
    let mut prov_labels: Vec<f64> = providers.iter().map(|p| prov_label[p]).collect();
    let prov_pos: BTreeMap<&str, usize> =
        providers.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let claim_prov: Vec<usize> = prov_ids.iter().map(|id| prov_pos[id.as_str()]).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(2007);
    for (cell, model) in run.report.cells.iter().zip(&run.artifacts.per_model) {
        let scores = &model.fold0_test_scores;
        let mut samples = Vec::with_capacity(200);
        for _ in 0..200 {
            prov_labels.shuffle(&mut rng);
            let perm: Vec<f64> = claim_prov.iter().map(|&p| prov_labels[p]).collect();
            samples.push(auc_prc(&pr_curve(scores, &perm).unwrap()));
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / (samples.len() - 1) as f64;
        let se = var.sqrt();
        let dev = (cell.test.auc_prc - prevalence).abs();
        assert!(
            dev <= 3.0 * se,
            "{}: AUC(PRC) {:.4} deviates from prevalence {prevalence:.4} by {dev:.4} > 3 SE ({:.4})",
            cell.model,
            cell.test.auc_prc,
            3.0 * se
        );
    }
    println!("criterion 7 (null-signal control): PASS");
}

// --------------------------------------------------------------- criterion 8

fn tensor_bytes(tensors: &[(String, Vec<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, vals) in tensors {
        out.extend_from_slice(name.as_bytes());
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[test]
fn criterion_8_autoencoder_behavior() {
    let run = cached_run(SEEDS[0]);
    let history = &run.artifacts.ae_history;
    assert!(history.len() <= 30);
    let first = history.first().unwrap().train_loss;
    let last = history.last().unwrap().train_loss;
    assert!(
        last <= 0.5 * first,
        "AE MSE only fell from {first:.5} to {last:.5} (needs 50%)"
    );

    // encoder parameters must not move during classifier training
    let before = tensor_bytes(&run.artifacts.ae.tensors());
    let features = &run.data.features;
    let mut x = features.rows.clone();
    run.artifacts.standardizer.apply(&mut x).unwrap();
    let pos: Vec<usize> = (0..features.labels.len()).filter(|&i| features.labels[i] > 0.5).collect();
    let neg: Vec<usize> = (0..features.labels.len()).filter(|&i| features.labels[i] <= 0.5).collect();
    let rows: Vec<usize> = pos.iter().chain(neg.iter().take(pos.len())).copied().collect();
    let xs = x.select_rows(&rows);
    let ys: Vec<f64> = rows.iter().map(|&i| features.labels[i]).collect();
    let latents = encode_standardized(run).select_rows(
        &rows
            .iter()
            .map(|&i| provider_row(run, &features.provider_ids[i]))
            .collect::<Vec<_>>(),
    );
    let tc = fraudkit::models::TrainConfig { epochs: 3, ..run.cfg.training.clone() };
    train_minnae(&xs, &latents, &ys, &run.cfg.model.minn, &tc, 99, None).unwrap();
    let after = tensor_bytes(&run.artifacts.ae.tensors());
    assert_eq!(before, after, "encoder parameters changed during classifier training");
    println!("criterion 8 (autoencoder behavior): PASS");
}

// --------------------------------------------------------------- criterion 9

fn provider_ids(run: &FullRun) -> Vec<String> {
    run.data.sequences.keys().cloned().collect()
}

fn provider_row(run: &FullRun, id: &str) -> usize {
    provider_ids(run).iter().position(|p| p == id).unwrap()
}

/// Latent vectors of every provider, using the run's sequence standardizer.
fn encode_standardized(run: &FullRun) -> Matrix {
    let ids = provider_ids(run);
    let mut batch = sequence_batch(&ids, &run.data.sequences).unwrap();
    let std = &run.artifacts.seq_standardizer;
    for b in 0..batch.batch() {
        for t in 0..batch.steps() {
            if batch.present(b, t) {
                let mut row: Vec<f64> =
                    (0..batch.features()).map(|f| batch.get(b, t, f)).collect();
                std.apply_row(&mut row);
                for (f, v) in row.into_iter().enumerate() {
                    batch.set(b, t, f, v);
                }
            }
        }
    }
    run.artifacts.ae.encode(&batch).unwrap()
}

#[test]
fn criterion_9_clustering() {
    // two-blob fixture: exactly 2 clusters, zero misassignments
    let mut rng = ChaCha20Rng::seed_from_u64(2009);
    let n = 60;
    let mut data = Vec::with_capacity(n * 2);
    for i in 0..n {
        let cx = if i < n / 2 { -4.0 } else { 4.0 };
        data.push(cx + rng.gen_range(-0.5..0.5));
        data.push(rng.gen_range(-0.5..0.5));
    }
    let points = Matrix::from_vec(n, 2, data).unwrap();
    let result = clustering::mean_shift(&points, 2.0, clustering::Kernel::Flat).unwrap();
    assert_eq!(result.centers.rows(), 2);
    for i in 0..n {
        assert_eq!(result.assignments[i] == result.assignments[0], i < n / 2);
    }

    // latent vectors of the default corpus form >= 2 clusters
    let run = cached_run(SEEDS[0]);
    let latent = encode_standardized(run);
    let bandwidth = clustering::estimate_bandwidth(&latent, 0.3).unwrap();
    let ms = clustering::mean_shift(&latent, bandwidth, clustering::Kernel::Flat).unwrap();
    assert!(
        ms.centers.rows() >= 2,
        "mean-shift found {} cluster(s) on the corpus latents",
        ms.centers.rows()
    );

    // exported CSV and SVG validate against their schema
    let ids = provider_ids(run);
    let labels: Vec<bool> = ids.iter().map(|id| run.data.sequences[id].label).collect();
    let (coords, _) = clustering::pca_2d(&latent).unwrap();
    let mut csv = Vec::new();
    clustering::write_cluster_csv(&mut csv, &ids, &coords, &ms.assignments, &labels).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "provider_id,x,y,cluster,label");
    for line in lines {
        assert_eq!(line.split(',').count(), 5, "bad CSV row: {line}");
    }
    assert_eq!(text.lines().count(), ids.len() + 1);
    let mut svg = Vec::new();
    clustering::write_cluster_svg(&mut svg, &coords, &ms.assignments, &labels).unwrap();
    let text = String::from_utf8(svg).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    println!("criterion 9 (clustering): PASS ({} corpus clusters)", ms.centers.rows());
}

// -------------------------------------------------------------- criterion 10

#[test]
fn criterion_10_reproducibility() {
    let first = cached_run(SEEDS[0]);
    let out_a = tempfile::tempdir().unwrap();
    write_artifacts(out_a.path(), &first.cfg, &first.report, &first.artifacts, &first.timings)
        .unwrap();

    // full rerun: reload the corpus from disk and repeat the experiment
    let data = load_from_dir(first.data_dir.path(), &first.cfg.data, first.cfg.model.provider_features)
        .unwrap();
    let (report, artifacts, timings) = run_experiment(&first.cfg, &data).unwrap();
    let out_b = tempfile::tempdir().unwrap();
    write_artifacts(out_b.path(), &first.cfg, &report, &artifacts, &timings).unwrap();

    let mut names: Vec<String> = std::fs::read_dir(out_a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "timings.json")
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "report.json"));
    assert!(names.iter().filter(|n| n.ends_with(".ckpt")).count() >= 7);
    for name in &names {
        let a = std::fs::read(out_a.path().join(name)).unwrap();
        let b = std::fs::read(out_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identically seeded runs");
    }
    println!("criterion 10 (reproducibility): PASS ({} artifacts compared)", names.len());
}
