//! Drives the compiled binary through the whole workflow on a small corpus
//! and checks that seeded reruns are byte-identical.

use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_fraudkit"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "fraudkit {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path) -> String {
    let cfg = dir.join("cfg.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 11\n\
             [data]\ndir = \"{data}\"\n\
             [synth]\nn_providers = 150\nfraud_rate = 0.08\n\
             [training]\nepochs = 4\n\
             [cv]\nfolds = 3\n\
             [resampling]\nrus_ratio = 1.0\n\
             [output]\ndir = \"{out}\"\n",
            data = dir.join("data").display(),
            out = dir.join("out").display()
        ),
    )
    .unwrap();
    cfg.display().to_string()
}

#[test]
fn full_workflow_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    run(&["--config", &cfg, "--quiet", "synth"]);
    let feats = dir.path().join("feats");
    run(&["--config", &cfg, "--quiet", "featurize", "--out", &feats.display().to_string()]);
    assert!(feats.join("features.csv").is_file());
    assert!(feats.join("sequences.csv").is_file());

    let out_a = dir.path().join("out");
    let out_b = dir.path().join("out_b");
    run(&["--config", &cfg, "--quiet", "train"]);
    run(&["--config", &cfg, "--quiet", "--out", &out_b.display().to_string(), "train"]);
    for name in [
        "report.json",
        "ae.ckpt",
        "minn_ae.ckpt",
        "bnn_45_25.ckpt",
        "minn_ae_fold0_history.csv",
        "minn_ae_roc.csv",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identically seeded runs");
    }
    // timings are wall-clock and live outside the compared artifacts
    assert!(out_a.join("timings.json").is_file());

    // evaluate the saved checkpoints on the exported features, twice
    let eval_a = dir.path().join("eval_a");
    let eval_b = dir.path().join("eval_b");
    for out in [&eval_a, &eval_b] {
        run(&[
            "--quiet",
            "evaluate",
            &out_a.display().to_string(),
            &feats.join("features.csv").display().to_string(),
            "--sequences",
            &feats.join("sequences.csv").display().to_string(),
            "--out",
            &out.display().to_string(),
        ]);
    }
    let ra = std::fs::read(eval_a.join("eval_report.json")).unwrap();
    let rb = std::fs::read(eval_b.join("eval_report.json")).unwrap();
    assert_eq!(ra, rb);
    let report: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    let models = report["models"].as_array().unwrap();
    assert_eq!(models.len(), 6);
    for m in models {
        let auc = m["metrics"]["auc_prc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }

    // cluster the embeddings from the trained encoder
    let clus = dir.path().join("clus");
    run(&[
        "--quiet",
        "cluster",
        &out_a.join("ae.ckpt").display().to_string(),
        &feats.join("sequences.csv").display().to_string(),
        "--out",
        &clus.display().to_string(),
    ]);
    let csv = std::fs::read_to_string(clus.join("clusters.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "provider_id,x,y,cluster,label");
    // one row per provider that has at least one claim (and thus a sequence)
    let seq_csv = std::fs::read_to_string(feats.join("sequences.csv")).unwrap();
    let n_providers = seq_csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    assert_eq!(lines.count(), n_providers);
    let svg = std::fs::read_to_string(clus.join("clusters.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    // comparison table over the two identical runs
    let table = run(&[
        "report",
        &out_a.display().to_string(),
        &out_b.display().to_string(),
    ]);
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.starts_with("model,precision,auc_roc,gmean,auc_prc,time_s"));
    assert_eq!(text.trim_end().lines().count(), 7);
}

#[test]
fn missing_config_fails_with_categorized_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_fraudkit"))
        .args(["train"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.starts_with("error (config):"), "got: {msg}");
}
