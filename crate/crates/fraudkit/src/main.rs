//! Command-line entry point.
//!
//! Subcommands mirror the pipeline stages: `synth` writes a seeded claims
//! corpus, `featurize` turns claims CSVs into feature and sequence files,
//! `train` runs the full cross-validated experiment, `evaluate` re-scores
//! saved checkpoints on a feature file, `cluster` projects and clusters the
//! autoencoder embeddings, and `report` consolidates run reports into one
//! comparison table.
//!
//! Every command exits 0 on success and 1 with a categorized error message
//! otherwise. All randomness derives from the config's master seed (or the
//! `--seed` override). `FRAUDKIT_DATA` supplies the default data directory
//! when the config does not set one.

use clap::{Parser, Subcommand};
use fraudkit::config::ExperimentConfig;
use fraudkit::models::{LstmAutoencoder, MinnAe, Mlp};
use fraudkit::pipeline::{
    read_features_csv, read_sequences_csv, write_features_csv, write_sequences_csv, Standardizer,
};
use fraudkit::training::{ModelSpec, TestMetrics};
use fraudkit::{checkpoint::Checkpoint, clustering, metrics, report, synth, Error, Result};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "fraudkit", version, about = "Provider-level claims fraud detection toolkit")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master-seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for fold-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the four seeded synthetic claims CSVs.
    Synth,
    /// Build feature and sequence files from the claims CSVs.
    Featurize {
        /// Claims CSV directory (default: the config's data directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the cross-validated experiment; write checkpoints and reports.
    Train,
    /// Re-score saved checkpoints on a feature file.
    Evaluate {
        /// Directory holding the checkpoints from `train`.
        checkpoints: PathBuf,
        /// Feature CSV produced by `featurize`.
        features: PathBuf,
        /// Sequence CSV (required for the multi-input model).
        #[arg(long)]
        sequences: Option<PathBuf>,
    },
    /// Cluster autoencoder embeddings and export CSV + SVG plots.
    Cluster {
        /// Autoencoder checkpoint (ae.ckpt from `train`).
        encoder: PathBuf,
        /// Sequence CSV produced by `featurize`.
        sequences: PathBuf,
        /// Neighbor quantile for the bandwidth heuristic.
        #[arg(long, default_value_t = 0.3)]
        quantile: f64,
    },
    /// Consolidate run reports into one comparison table.
    Report {
        /// Run directories, each holding report.json and timings.json.
        runs: Vec<PathBuf>,
    },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // ignore failure if a pool already exists (e.g. repeated init in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            std::process::ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Data directory: the config value, unless it is the built-in default and
/// `FRAUDKIT_DATA` is set.
fn data_dir(cfg: &ExperimentConfig) -> PathBuf {
    if cfg.data.dir == "data" {
        if let Ok(env_dir) = std::env::var("FRAUDKIT_DATA") {
            return PathBuf::from(env_dir);
        }
    }
    PathBuf::from(&cfg.data.dir)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth => {
            let cfg = load_config(cli)?;
            let dir = cli.out.clone().unwrap_or_else(|| data_dir(&cfg));
            let mut synth_cfg = cfg.synth.clone();
            synth_cfg.seed = cfg.seed;
            let corpus = synth::generate(&synth_cfg)?;
            corpus.write_csvs(&dir)?;
            if !cli.quiet {
                println!(
                    "wrote {} claims for {} providers ({} excluded) to {}",
                    corpus.claims.len(),
                    corpus.providers.len(),
                    corpus.leie.len(),
                    dir.display()
                );
            }
            Ok(())
        }
        Command::Featurize { input } => {
            let cfg = load_config(cli)?;
            let input = input.clone().unwrap_or_else(|| data_dir(&cfg));
            let out = out_dir(cli, &cfg);
            let data = report::load_from_dir(&input, &cfg.data, cfg.model.provider_features)?;
            std::fs::create_dir_all(&out)?;
            write_features_csv(&data.features, &out.join("features.csv"))?;
            write_sequences_csv(&data.sequences, &out.join("sequences.csv"))?;
            if !cli.quiet {
                println!(
                    "wrote {} claim rows ({} columns) to {}",
                    data.features.provider_ids.len(),
                    data.features.columns.len(),
                    out.display()
                );
            }
            Ok(())
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, &cfg);
            let data = report::load_from_dir(&data_dir(&cfg), &cfg.data, cfg.model.provider_features)?;
            let (run_report, artifacts, timings) = report::run_experiment(&cfg, &data)?;
            report::write_artifacts(&out, &cfg, &run_report, &artifacts, &timings)?;
            if !cli.quiet {
                for cell in &run_report.cells {
                    println!(
                        "{:>10}: precision {:.4}  auc_roc {:.4}  gmean {:.4}  auc_prc {:.4}",
                        cell.model,
                        cell.test.precision,
                        cell.test.auc_roc,
                        cell.test.gmean,
                        cell.test.auc_prc
                    );
                }
                println!("artifacts in {}", out.display());
            }
            Ok(())
        }
        Command::Evaluate {
            checkpoints,
            features,
            sequences,
        } => {
            let out = cli.out.clone().unwrap_or_else(|| checkpoints.clone());
            evaluate_checkpoints(checkpoints, features, sequences.as_deref(), &out, cli.quiet)
        }
        Command::Cluster {
            encoder,
            sequences,
            quantile,
        } => {
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| encoder.parent().unwrap_or(Path::new(".")).to_path_buf());
            cluster_embeddings(encoder, sequences, *quantile, &out, cli.quiet)
        }
        Command::Report { runs } => {
            let cfg_out = cli.out.clone();
            if runs.is_empty() {
                return Err(Error::Parameter("report needs at least one run directory".into()));
            }
            let mut reports = Vec::new();
            let mut timings = Vec::new();
            for dir in runs {
                let text = std::fs::read_to_string(dir.join("report.json"))?;
                reports.push(serde_json::from_str(&text)?);
                let t = std::fs::read_to_string(dir.join("timings.json"))?;
                timings.push(serde_json::from_str(&t)?);
            }
            let table = report::comparison_table(&reports, &timings)?;
            if let Some(out) = cfg_out {
                std::fs::create_dir_all(&out)?;
                std::fs::write(out.join("table5.csv"), &table)?;
            }
            print!("{table}");
            Ok(())
        }
    }
}

/// Rebuilds a model from a checkpoint's stored spec and tensors.
fn rebuild_model(
    ckpt: &Checkpoint,
) -> Result<(fraudkit::training::TrainedModel, f64)> {
    let spec: ModelSpec = serde_json::from_value(ckpt.meta["model"]["spec"].clone())?;
    let static_width = ckpt.meta["model"]["static_width"]
        .as_u64()
        .ok_or_else(|| Error::Checkpoint("missing static_width".into()))? as usize;
    let threshold = ckpt.meta["threshold"]
        .as_f64()
        .ok_or_else(|| Error::Checkpoint("missing threshold".into()))?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Checkpoint(format!("threshold {threshold} outside [0,1]")));
    }
    let mut rng = fraudkit::seed::rng_for(0, "rebuild");
    let model = match &spec {
        ModelSpec::Mlp(cfg) => {
            let mut m = Mlp::new(static_width, cfg, &mut rng)?;
            m.load_tensors(&ckpt.tensors)?;
            fraudkit::training::TrainedModel::Mlp(m)
        }
        ModelSpec::MinnAe(cfg) => {
            let latent_width = ckpt.meta["model"]["latent_width"]
                .as_u64()
                .ok_or_else(|| Error::Checkpoint("missing latent_width".into()))?
                as usize;
            let mut m = MinnAe::new(static_width, latent_width, cfg, &mut rng)?;
            m.load_tensors(&ckpt.tensors)?;
            fraudkit::training::TrainedModel::MinnAe(m)
        }
    };
    Ok((model, threshold))
}

fn load_encoder(path: &Path) -> Result<(LstmAutoencoder, Standardizer)> {
    let ckpt = Checkpoint::load(path)?;
    let ae_cfg: fraudkit::models::AeConfig =
        serde_json::from_value(ckpt.meta["model"]["config"].clone())?;
    let features = ckpt.meta["model"]["features"]
        .as_u64()
        .ok_or_else(|| Error::Checkpoint("missing feature width".into()))? as usize;
    let seq_std: Standardizer = serde_json::from_value(ckpt.meta["seq_standardizer"].clone())?;
    let mut rng = fraudkit::seed::rng_for(0, "rebuild");
    let mut ae = LstmAutoencoder::new(features, &ae_cfg, &mut rng)?;
    ae.load_tensors(&ckpt.tensors)?;
    Ok((ae, seq_std))
}

fn evaluate_checkpoints(
    ckpt_dir: &Path,
    features_path: &Path,
    sequences_path: Option<&Path>,
    out: &Path,
    quiet: bool,
) -> Result<()> {
    let fm = read_features_csv(features_path)?;
    let std: Standardizer = {
        // any model checkpoint carries the run's standardizer
        let first = first_checkpoint(ckpt_dir)?;
        serde_json::from_value(first.meta["standardizer"].clone())?
    };
    let mut x = fm.rows.clone();
    std.apply(&mut x)?;
    let latent = match sequences_path {
        Some(sp) => {
            let (ae, seq_std) = load_encoder(&ckpt_dir.join("ae.ckpt"))?;
            let sequences = read_sequences_csv(sp)?;
            let prov_ids: Vec<String> = sequences.keys().cloned().collect();
            let mut batch = report::sequence_batch(&prov_ids, &sequences)?;
            apply_seq_standardizer(&mut batch, &seq_std);
            let latent_prov = ae.encode(&batch)?;
            let pos: std::collections::BTreeMap<&str, usize> = prov_ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            let rows: Vec<usize> = fm
                .provider_ids
                .iter()
                .map(|id| {
                    pos.get(id.as_str()).copied().ok_or_else(|| {
                        Error::Consistency(format!("provider {id} missing from sequence file"))
                    })
                })
                .collect::<Result<_>>()?;
            Some(latent_prov.select_rows(&rows))
        }
        None => None,
    };
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(ckpt_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("ckpt") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if stem == "ae" {
            continue;
        }
        names.push(stem.to_string());
    }
    names.sort();
    for name in &names {
        let ckpt = Checkpoint::load(&ckpt_dir.join(format!("{name}.ckpt")))?;
        let (model, threshold) = rebuild_model(&ckpt)?;
        if matches!(model, fraudkit::training::TrainedModel::MinnAe(_)) && latent.is_none() {
            return Err(Error::Parameter(format!(
                "{name} needs --sequences to rebuild its embedding input"
            )));
        }
        let scores = model.predict(&x, latent.as_ref())?;
        let c = metrics::confusion(&scores, &fm.labels, threshold)?;
        let roc = metrics::roc_curve(&scores, &fm.labels)?;
        let pr = metrics::pr_curve(&scores, &fm.labels)?;
        let m = TestMetrics {
            threshold,
            precision: metrics::precision(&c).0,
            recall: metrics::recall(&c).0,
            gmean: metrics::gmean(&c).0,
            auc_roc: metrics::auc_roc(&roc),
            auc_prc: metrics::auc_prc(&pr),
        };
        let mut roc_out = std::io::BufWriter::new(std::fs::File::create(
            out.join(format!("{name}_roc.csv")),
        )?);
        roc.write_csv(&mut roc_out)?;
        let mut pr_out = std::io::BufWriter::new(std::fs::File::create(
            out.join(format!("{name}_prc.csv")),
        )?);
        pr.write_csv(&mut pr_out)?;
        if !quiet {
            println!(
                "{name:>10}: precision {:.4}  auc_roc {:.4}  gmean {:.4}  auc_prc {:.4}",
                m.precision, m.auc_roc, m.gmean, m.auc_prc
            );
        }
        rows.push((name.clone(), m));
    }
    let eval: serde_json::Value = serde_json::json!({
        "version": report::REPORT_VERSION,
        "models": rows.iter().map(|(name, m)| {
            serde_json::json!({"model": name, "metrics": m})
        }).collect::<Vec<_>>(),
    });
    std::fs::write(out.join("eval_report.json"), serde_json::to_string_pretty(&eval)?)?;
    Ok(())
}

fn first_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("ckpt"))
        .collect();
    paths.sort();
    let path = paths
        .first()
        .ok_or_else(|| Error::Checkpoint(format!("no checkpoints in {}", dir.display())))?;
    Checkpoint::load(path)
}

fn apply_seq_standardizer(batch: &mut fraudkit::linalg::SequenceBatch, std: &Standardizer) {
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
}

fn cluster_embeddings(
    encoder: &Path,
    sequences_path: &Path,
    quantile: f64,
    out: &Path,
    quiet: bool,
) -> Result<()> {
    let (ae, seq_std) = load_encoder(encoder)?;
    let sequences = read_sequences_csv(sequences_path)?;
    let ids: Vec<String> = sequences.keys().cloned().collect();
    let labels: Vec<bool> = ids.iter().map(|id| sequences[id].label).collect();
    let mut batch = report::sequence_batch(&ids, &sequences)?;
    apply_seq_standardizer(&mut batch, &seq_std);
    let latent = ae.encode(&batch)?;
    let bandwidth = clustering::estimate_bandwidth(&latent, quantile)?;
    let result = clustering::mean_shift(&latent, bandwidth, clustering::Kernel::Flat)?;
    let (coords, explained) = clustering::pca_2d(&latent)?;
    std::fs::create_dir_all(out)?;
    let mut csv_out =
        std::io::BufWriter::new(std::fs::File::create(out.join("clusters.csv"))?);
    clustering::write_cluster_csv(&mut csv_out, &ids, &coords, &result.assignments, &labels)?;
    let mut svg_out =
        std::io::BufWriter::new(std::fs::File::create(out.join("clusters.svg"))?);
    clustering::write_cluster_svg(&mut svg_out, &coords, &result.assignments, &labels)?;
    if !quiet {
        println!(
            "{} clusters (bandwidth {bandwidth:.4}), 2-component variance share {explained:.3}",
            result.centers.rows()
        );
    }
    Ok(())
}
