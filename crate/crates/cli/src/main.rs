//! `dfdet` — command-line driver for the face-forgery detection toolkit.
//!
//! The pipeline runs in stages, each of which writes its outputs into a
//! directory stamped with the digest of the run configuration. Later stages
//! verify the stamp so that artifacts produced under a different
//! configuration are rejected instead of silently mixed.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dfdet_core::catalog::{balance_classes, load_catalog, split_videos, Partition, SplitPlan};
use dfdet_core::classifier::checkpoint::{load_checkpoint, save_checkpoint};
use dfdet_core::classifier::build_model;
use dfdet_core::config::RunConfig;
use dfdet_core::data::load_partition;
use dfdet_core::evaluator::{evaluate, metrics_from_matrix, recount, render_report, EvalReport, SamplePrediction};
use dfdet_core::facepipe::dataset::build_face_dataset;
use dfdet_core::facepipe::detector::detector_by_name;
use dfdet_core::fixture::{generate_fixture, FixtureSpec};
use dfdet_core::trainer::{train, EpochStats};
use dfdet_core::Label;

/// Environment variable that overrides `dataset_root` from the config file.
const DATA_ROOT_ENV: &str = "DFDET_DATA_ROOT";

#[derive(Parser)]
#[command(name = "dfdet", version, about = "Face-forgery detection pipeline")]
struct Cli {
    /// Run configuration file (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory of the current command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Balance the catalog and assign every video to train/val/test.
    Split,
    /// Detect, crop and normalize faces; build the frame-level dataset.
    Preprocess {
        /// Split plan produced by `dfdet split`.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Train the classifier on the preprocessed dataset.
    Train {
        /// Dataset root produced by `dfdet preprocess`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score the held-out test partition with a trained checkpoint.
    Evaluate {
        /// Training run directory produced by `dfdet train`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Dataset root produced by `dfdet preprocess`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Re-render metrics and figures from existing evaluation artifacts.
    Report {
        /// Evaluation directory produced by `dfdet evaluate`.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Training run directory holding `history.csv` (optional).
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Generate the bundled synthetic smoke-test dataset.
    GenFixture {
        /// Videos per class.
        #[arg(long, default_value_t = 4)]
        videos: usize,
        /// Frames per video.
        #[arg(long, default_value_t = 6)]
        frames: usize,
    },
}

/// Per-run record written by `train` and consumed by `evaluate`.
#[derive(Serialize, Deserialize)]
struct RunMeta {
    config_digest: String,
    backbone_id: String,
    seed: u64,
    epochs: usize,
    best_epoch: usize,
    best_val_accuracy: f64,
    checkpoint: String,
    checkpoint_digest: String,
    train_videos: Vec<String>,
    val_videos: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dfdet: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.train.seed = seed;
    }
    if let Ok(root) = std::env::var(DATA_ROOT_ENV) {
        if !root.is_empty() {
            config.dataset_root = PathBuf::from(root);
        }
    }

    match cli.command {
        Command::Split => cmd_split(&config, cli.out.as_deref()),
        Command::Preprocess { split } => cmd_preprocess(&config, split.as_deref(), cli.out.as_deref()),
        Command::Train { data } => cmd_train(&config, data.as_deref(), cli.out.as_deref()),
        Command::Evaluate { run, data } => {
            cmd_evaluate(&config, run.as_deref(), data.as_deref(), cli.out.as_deref())
        }
        Command::Report { eval, run } => cmd_report(&config, eval.as_deref(), run.as_deref(), cli.out.as_deref()),
        Command::GenFixture { videos, frames } => cmd_gen_fixture(&config, videos, frames, cli.out.as_deref()),
    }
}

fn cmd_split(config: &RunConfig, out: Option<&Path>) -> Result<()> {
    let out_dir = out.unwrap_or(&config.run_dir);
    let catalog = load_catalog(&config.manifest)
        .with_context(|| format!("loading manifest {}", config.manifest.display()))?;
    let balanced = balance_classes(&catalog, config.seed).context("balancing classes")?;
    let plan = split_videos(
        &balanced,
        config.split.test_fraction,
        config.split.val_fraction,
        config.seed,
    )
    .context("splitting videos")?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let plan_path = out_dir.join("split.json");
    plan.save(&plan_path).context("writing split plan")?;
    config.stamp(out_dir).context("stamping output")?;

    println!(
        "split: {} videos -> {} (plan {})",
        balanced.len(),
        serde_json::to_string(&plan.per_class_counts).expect("counts serialize"),
        plan_path.display()
    );
    Ok(())
}

fn cmd_preprocess(config: &RunConfig, split: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let default_plan = config.run_dir.join("split.json");
    let plan_path = split.unwrap_or(&default_plan);
    let out_dir = out.unwrap_or(&config.dataset_root);

    let catalog = load_catalog(&config.manifest)
        .with_context(|| format!("loading manifest {}", config.manifest.display()))?;
    let plan = SplitPlan::load(plan_path)
        .with_context(|| format!("loading split plan {}", plan_path.display()))?;
    let detector = detector_by_name(&config.detector)
        .with_context(|| format!("unknown detector '{}'", config.detector))?;

    let report = build_face_dataset(&catalog, &plan, &config.pipeline, detector.as_ref(), out_dir)
        .context("building face dataset")?;
    config.stamp(out_dir).context("stamping output")?;

    println!(
        "preprocess: {} samples, {} faceless videos, {} failures ({})",
        report.rows.len(),
        report.faceless.len(),
        report.failures.len(),
        out_dir.display()
    );
    for (id, why) in &report.failures {
        eprintln!("dfdet: warning: video {id} skipped: {why}");
    }
    Ok(())
}

fn cmd_train(config: &RunConfig, data: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let data_root = data.unwrap_or(&config.dataset_root);
    let out_dir = out.unwrap_or(&config.run_dir).to_path_buf();
    config
        .check_stamp(data_root)
        .with_context(|| format!("dataset {} was not built under this config", data_root.display()))?;

    let means = config.pipeline.means;
    let stds = config.pipeline.stds;
    let train_set = load_partition(data_root, Partition::Train, means, stds)
        .context("loading train partition")?;
    let val_set = load_partition(data_root, Partition::Val, means, stds)
        .context("loading val partition")?;

    let mut model = build_model(&config.backbone_id, false, config.seed)
        .with_context(|| format!("building backbone '{}'", config.backbone_id))?;

    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let history_path = out_dir.join("history.csv");
    let mut history_file =
        fs::File::create(&history_path).with_context(|| format!("creating {}", history_path.display()))?;

    let result = train(&mut model, &train_set, &val_set, &config.train, Some(&mut history_file))
        .context("training")?;

    let ckpt_path = out_dir.join("model.ckpt");
    let digest = save_checkpoint(&model, &ckpt_path, &config.digest(), Some(&result.optimizer))
        .context("writing checkpoint")?;

    let meta = RunMeta {
        config_digest: config.digest(),
        backbone_id: config.backbone_id.clone(),
        seed: config.seed,
        epochs: result.history.len(),
        best_epoch: result.best_epoch,
        best_val_accuracy: result.best_val_accuracy,
        checkpoint: "model.ckpt".into(),
        checkpoint_digest: digest.clone(),
        train_videos: train_set.video_id_set().into_iter().collect(),
        val_videos: val_set.video_id_set().into_iter().collect(),
    };
    let meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(out_dir.join("run_meta.json"), format!("{meta_json}\n")).context("writing run_meta.json")?;
    config.stamp(&out_dir).context("stamping output")?;

    println!(
        "train: {} epochs, best epoch {} (val accuracy {:.4}), checkpoint {} ({})",
        meta.epochs,
        meta.best_epoch,
        meta.best_val_accuracy,
        ckpt_path.display(),
        &digest[..12]
    );
    Ok(())
}

fn cmd_evaluate(config: &RunConfig, run: Option<&Path>, data: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let run_dir = run.unwrap_or(&config.run_dir);
    let data_root = data.unwrap_or(&config.dataset_root);
    let default_out = run_dir.join("eval");
    let out_dir = out.map(Path::to_path_buf).unwrap_or(default_out);

    config
        .check_stamp(data_root)
        .with_context(|| format!("dataset {} was not built under this config", data_root.display()))?;
    config
        .check_stamp(run_dir)
        .with_context(|| format!("run {} was not produced under this config", run_dir.display()))?;

    let meta: RunMeta = serde_json::from_str(
        &fs::read_to_string(run_dir.join("run_meta.json")).context("reading run_meta.json")?,
    )
    .context("parsing run_meta.json")?;

    let (model, ckpt_meta) = load_checkpoint(&run_dir.join(&meta.checkpoint), Some(&config.backbone_id))
        .context("loading checkpoint")?;

    let test_set = load_partition(data_root, Partition::Test, config.pipeline.means, config.pipeline.stds)
        .context("loading test partition")?;

    let trained: BTreeSet<String> = meta
        .train_videos
        .iter()
        .chain(meta.val_videos.iter())
        .cloned()
        .collect();
    let report = evaluate(&model, &test_set, config.decision_threshold, &trained, &ckpt_meta.digest)
        .context("evaluating")?;

    let history = read_history(&run_dir.join("history.csv")).unwrap_or_default();
    let written = render_report(&report, &history, &out_dir).context("writing report")?;
    config.stamp(&out_dir).context("stamping output")?;

    println!(
        "evaluate: {} samples, accuracy {} -> {} ({})",
        report.per_sample.len(),
        report
            .metrics
            .accuracy
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "undefined".into()),
        out_dir.display(),
        written.join(", ")
    );
    Ok(())
}

fn cmd_report(config: &RunConfig, eval: Option<&Path>, run: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let default_eval = config.run_dir.join("eval");
    let eval_dir = eval.unwrap_or(&default_eval);
    let run_dir = run.unwrap_or(&config.run_dir);
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| eval_dir.to_path_buf());

    let per_sample = read_per_sample(&eval_dir.join("per_sample.csv"))
        .with_context(|| format!("reading {}", eval_dir.join("per_sample.csv").display()))?;
    if per_sample.is_empty() {
        bail!("no per-sample rows in {}", eval_dir.display());
    }
    let prior: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(eval_dir.join("metrics.json")).context("reading metrics.json")?,
    )
    .context("parsing metrics.json")?;
    let threshold = prior["threshold"].as_f64().unwrap_or(config.decision_threshold);
    let checkpoint_digest = prior["checkpoint_digest"].as_str().unwrap_or("").to_string();

    let matrix = recount(&per_sample);
    let report = EvalReport {
        metrics: metrics_from_matrix(&matrix),
        matrix,
        threshold,
        checkpoint_digest,
        per_sample,
    };
    let history = read_history(&run_dir.join("history.csv")).unwrap_or_default();
    let written = render_report(&report, &history, &out_dir).context("writing report")?;

    println!("report: {} -> {} ({})", eval_dir.display(), out_dir.display(), written.join(", "));
    Ok(())
}

fn cmd_gen_fixture(config: &RunConfig, videos: usize, frames: usize, out: Option<&Path>) -> Result<()> {
    let default_out = PathBuf::from("fixture");
    let out_dir = out.unwrap_or(&default_out);
    let spec = FixtureSpec {
        videos_per_class: videos,
        frames_per_video: frames,
        ..FixtureSpec::default()
    };
    let manifest = generate_fixture(out_dir, config.seed, &spec).context("generating fixture")?;
    println!(
        "gen-fixture: {} videos x {} frames per class -> {}",
        videos,
        frames,
        manifest.display()
    );
    Ok(())
}

/// Parses a `history.csv` written by `dfdet train`.
fn read_history(path: &Path) -> Result<Vec<EpochStats>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            bail!("{}: malformed row {}", path.display(), i + 1);
        }
        out.push(EpochStats {
            epoch: cols[0].parse().with_context(|| format!("row {}", i + 1))?,
            train_loss: cols[1].parse().with_context(|| format!("row {}", i + 1))?,
            val_loss: cols[2].parse().with_context(|| format!("row {}", i + 1))?,
            val_accuracy: cols[3].parse().with_context(|| format!("row {}", i + 1))?,
            wall_time_s: cols[4].parse().with_context(|| format!("row {}", i + 1))?,
        });
    }
    Ok(out)
}

/// Parses a `per_sample.csv` written by the evaluator.
fn read_per_sample(path: &Path) -> Result<Vec<SamplePrediction>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("malformed row {}", i + 1);
        }
        let parse_label = |s: &str| Label::parse(s).with_context(|| format!("bad label in row {}", i + 1));
        out.push(SamplePrediction {
            sample_path: cols[0].to_string(),
            p_fake: cols[1].parse().with_context(|| format!("row {}", i + 1))?,
            predicted: parse_label(cols[2])?,
            truth: parse_label(cols[3])?,
        });
    }
    Ok(out)
}
