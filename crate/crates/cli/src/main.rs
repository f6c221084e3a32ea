//! `emofuse` — one multiplexed binary for data generation, validation,
//! training, evaluation, and the chunk-size ablation harness.
//!
//! Exit codes: 0 success, 1 validation/metric/runtime failure, 2 usage error.

mod config;
mod provenance;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use emofuse_core::datamodel::{
    split_statistics, validate_sample, Modality, Split, TaskKind,
};
use emofuse_core::encoders::{StubTextEmbedder, TextEmbedder};
use emofuse_core::featurestore::{generate_synthetic, load_dataset, pack_digest, SyntheticSpec};
use emofuse_core::metrics::{
    bah_score, emi_score, files, median_smooth, min_duration_filter, threshold,
};
use emofuse_core::model::save_model;
use emofuse_core::training::{
    ablate_text_chunks, ablation_csv, evaluate_bah, evaluate_emi, train, train_mtl, TrainConfig,
};

use config::TrainArgs;
use provenance::RunRecord;

const EXIT_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Parser)]
#[command(
    name = "emofuse",
    version,
    about = "Multimodal temporal-fusion pipeline: emotion-intensity regression and frame-level ambivalence/hesitancy detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic feature pack with planted signal.
    Synth(SynthArgs),
    /// Validate every sample of a pack; nonzero exit on violations.
    Validate(ValidateArgs),
    /// Train a fusion model (or the multi-task variant) on a pack.
    Train(TrainArgs),
    /// Score prediction files against label files, with optional smoothing.
    Eval(EvalArgs),
    /// Retrain per text chunk size and emit a window_s,f1_val table.
    AblateChunks(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Task kind: emi or bah.
    #[arg(long, value_parser = parse_task)]
    task: TaskKind,
    /// Training-split sample count.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Validation-split sample count (default: half of --n).
    #[arg(long)]
    n_val: Option<usize>,
    /// Test-split sample count (default: half of --n).
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    duration_min: f64,
    #[arg(long, default_value_t = 6.0)]
    duration_max: f64,
    #[arg(long, default_value_t = 12)]
    audio_dim: usize,
    #[arg(long, default_value_t = 12)]
    vision_dim: usize,
    /// Planted-signal strength in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value_t = 25.0)]
    audio_rate: f64,
    #[arg(long, default_value_t = 6.0)]
    vision_rate: f64,
    #[arg(long, default_value_t = 5.0)]
    vad_rate: f64,
    /// BAH label frame rate.
    #[arg(long, default_value_t = 25.0)]
    label_rate: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Pack root to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Pack root (or manifest path).
    #[arg(long)]
    pack: PathBuf,
    /// Where to write run.json (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_parser = parse_task)]
    task: TaskKind,
    /// Predictions file (EMI: `id,i0..i5`; BAH: `frame_index,probability`).
    #[arg(long)]
    pred: PathBuf,
    /// Labels file (EMI: same shape as predictions; BAH: one 0/1 per line).
    #[arg(long)]
    labels: PathBuf,
    /// Smoothing steps applied in order after thresholding (BAH only),
    /// e.g. `median:3` or `minrun:5`. Repeatable.
    #[arg(long = "smooth")]
    smooth: Vec<String>,
    /// BAH decision threshold.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Comma-separated text window sizes in seconds, e.g. `5,15,20,25,35`.
    #[arg(long = "text-window")]
    text_windows: String,
    #[command(flatten)]
    train: TrainArgs,
}

fn parse_task(raw: &str) -> Result<TaskKind, String> {
    match raw.to_ascii_lowercase().as_str() {
        "emi" => Ok(TaskKind::Emi),
        "bah" => Ok(TaskKind::Bah),
        _ => Err(format!("unknown task {raw:?}; expected emi or bah")),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            EXIT_FAILURE
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::AblateChunks(args) => cmd_ablate(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<i32> {
    let mut spec = SyntheticSpec::new(args.task, args.seed);
    spec.n_train = args.n;
    spec.n_val = args.n_val.unwrap_or(args.n / 2).max(1);
    spec.n_test = args.n_test.unwrap_or(args.n / 2).max(1);
    spec.duration_range_s = (args.duration_min, args.duration_max);
    spec.audio_dim = args.audio_dim;
    spec.vision_dim = args.vision_dim;
    spec.signal_strength = args.signal;
    spec.audio_rate_hz = args.audio_rate;
    spec.vision_rate_hz = args.vision_rate;
    spec.vad_rate_hz = args.vad_rate;
    spec.label_rate_hz = args.label_rate;

    let manifest = generate_synthetic(&spec, &args.out)?;
    let digest = pack_digest(&args.out)?;
    let stats = split_statistics(&manifest);
    println!(
        "pack written to {} ({} train / {} val / {} test samples, digest {})",
        args.out.display(),
        stats.train.count,
        stats.val.count,
        stats.test.count,
        &digest[..16]
    );

    let mut record = RunRecord::new("synth", args.seed);
    record.config = serde_json::json!({
        "task": args.task,
        "n_train": spec.n_train,
        "n_val": spec.n_val,
        "n_test": spec.n_test,
        "duration_range_s": spec.duration_range_s,
        "audio_dim": spec.audio_dim,
        "vision_dim": spec.vision_dim,
        "signal_strength": spec.signal_strength,
        "audio_rate_hz": spec.audio_rate_hz,
        "vision_rate_hz": spec.vision_rate_hz,
        "vad_rate_hz": spec.vad_rate_hz,
        "label_rate_hz": spec.label_rate_hz,
        "out": args.out,
    });
    record.outputs.insert("pack_digest".into(), digest);
    record.write(args.out.join("run.json"))?;
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> Result<i32> {
    let dataset = match load_dataset(&args.pack) {
        Ok(ds) => ds,
        Err(err) => {
            // Structural problems (unresolvable paths, duplicate ids, bad
            // schema) are validation failures, not usage errors.
            eprintln!("validation failed: {err}");
            return Ok(EXIT_FAILURE);
        }
    };
    let manifest = dataset.manifest();
    if manifest.samples.is_empty() {
        println!("warning: 0 samples in manifest");
    }
    let mut violation_lines = 0usize;
    let mut checked = 0usize;
    for desc in &manifest.samples {
        match dataset.load_sample(desc) {
            Ok(sample) => {
                for violation in validate_sample(&sample) {
                    println!("{}: {}", desc.id, violation);
                    violation_lines += 1;
                }
            }
            Err(err) => {
                println!("{}: io: {}", desc.id, err);
                violation_lines += 1;
            }
        }
        checked += 1;
    }
    let stats = split_statistics(manifest);
    println!(
        "checked {checked} samples ({} train / {} val / {} test), {violation_lines} violations",
        stats.train.count, stats.val.count, stats.test.count
    );

    let mut record = RunRecord::new("validate", 0);
    record.config = serde_json::json!({ "pack": args.pack });
    record
        .outputs
        .insert("violations".into(), violation_lines.to_string());
    record.write(args.out.join("run.json"))?;

    Ok(if violation_lines == 0 { 0 } else { EXIT_FAILURE })
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let (config, pack, out) = match args.resolve() {
        Ok(parts) => parts,
        Err(err) => {
            eprintln!("usage error: {err:#}");
            return Ok(EXIT_USAGE);
        }
    };
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let dataset = load_dataset(&pack)?;
    if dataset.task() != config.task {
        bail!(
            "pack task {} does not match --task {}",
            dataset.task(),
            config.task
        );
    }
    let train_samples = dataset.load_split(Split::Train)?;
    let val_samples = dataset.load_split(Split::Val)?;

    // Persist the resolved config verbatim next to the outputs.
    let config_json = serde_json::to_string_pretty(&config)?;
    std::fs::write(out.join("config.json"), &config_json)?;

    let embedder = StubTextEmbedder::new(
        config.text_dim,
        config.seed,
        config.window.marker_token.clone(),
    );

    let history_csv;
    let best_epoch;
    let best_val;
    if config.mtl {
        let outcome = train_mtl(&config, &train_samples, &val_samples)?;
        history_csv = outcome.history.to_csv();
        best_epoch = outcome.history.best_epoch;
        best_val = outcome.history.best_val;
        outcome.model.save(out.join("model.f32"))?;
        write_val_outputs(&outcome.model, &config, &val_samples, &embedder, &out)?;
    } else {
        let outcome = train(&config, &train_samples, &val_samples)?;
        history_csv = outcome.history.to_csv();
        best_epoch = outcome.history.best_epoch;
        best_val = outcome.history.best_val;
        save_model(&outcome.model, out.join("model.f32"))?;
        write_val_outputs(&outcome.model, &config, &val_samples, &embedder, &out)?;
    }
    std::fs::write(out.join("history.csv"), &history_csv)?;
    println!(
        "trained {} on {} samples; best epoch {best_epoch} with val metric {best_val:.4}",
        config.task,
        train_samples.len()
    );

    let mut record = RunRecord::new("train", config.seed);
    record.config = serde_json::from_str(&config_json)?;
    record.inputs.insert("pack".into(), pack.display().to_string());
    record.inputs.insert("pack_digest".into(), pack_digest(&pack)?);
    for name in ["config.json", "history.csv", "model.f32", "model.meta.json"] {
        record.hash_output(&out, name)?;
    }
    record.write(out.join("run.json"))?;
    Ok(0)
}

fn write_val_outputs(
    predictor: &impl emofuse_core::training::Predictor,
    config: &TrainConfig,
    val_samples: &[emofuse_core::datamodel::Sample],
    embedder: &StubTextEmbedder,
    out: &Path,
) -> Result<()> {
    match config.task {
        TaskKind::Emi => {
            let report = evaluate_emi(predictor, val_samples, &config.window, embedder)?;
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for sample in val_samples {
                let assembled = emofuse_core::windowing::emi_fixed_inputs(sample, &config.window)?;
                let inputs = emofuse_core::model::ModelInputs {
                    audio: assembled.audio,
                    vision: assembled.vision,
                    text: assembled.tokens.as_ref().map(|t| embedder.embed(t)),
                };
                match predictor.predict_item(&inputs)? {
                    emofuse_core::mtl::Prediction::Emi(vals) => {
                        rows.push((sample.id.clone(), vals))
                    }
                    _ => bail!("EMI run produced a BAH prediction"),
                }
                match &sample.label {
                    emofuse_core::datamodel::SampleLabel::Emi(l) => {
                        labels.push((sample.id.clone(), l.intensities))
                    }
                    _ => bail!("non-EMI label in EMI pack"),
                }
            }
            files::write_emi_predictions(&rows, out.join("val_predictions.csv"))?;
            files::write_emi_predictions(&labels, out.join("val_labels.csv"))?;
            println!("val mean rho {:.4}", report.rho_mean);
        }
        TaskKind::Bah => {
            let (report, tracks) = evaluate_bah(
                predictor,
                val_samples,
                &config.window,
                embedder,
                config.stride_frames,
                config.tau,
            )?;
            let pred_dir = out.join("predictions");
            let label_dir = out.join("labels");
            std::fs::create_dir_all(&pred_dir)?;
            std::fs::create_dir_all(&label_dir)?;
            for (sample, (id, probs)) in val_samples.iter().zip(&tracks) {
                files::write_bah_predictions(probs, pred_dir.join(format!("{id}.csv")))?;
                if let emofuse_core::datamodel::SampleLabel::Bah(track) = &sample.label {
                    let strided: Vec<u8> = track
                        .labels
                        .iter()
                        .step_by(config.stride_frames)
                        .copied()
                        .collect();
                    files::write_bah_labels_text(&strided, label_dir.join(format!("{id}.txt")))?;
                }
            }
            println!("val weighted F1 {:.4}", report.f1_weighted);
        }
    }
    Ok(())
}

enum SmoothStep {
    Median(usize),
    MinRun(usize),
}

fn parse_smooth(raw: &[String]) -> Result<Vec<SmoothStep>, String> {
    raw.iter()
        .map(|spec| {
            let (kind, value) = spec
                .split_once(':')
                .ok_or_else(|| format!("bad smooth spec {spec:?}; expected kind:value"))?;
            let value: usize = value
                .parse()
                .map_err(|_| format!("bad smooth value in {spec:?}"))?;
            match kind {
                "median" => Ok(SmoothStep::Median(value)),
                "minrun" => Ok(SmoothStep::MinRun(value)),
                _ => Err(format!("unknown smooth kind {kind:?}; expected median or minrun")),
            }
        })
        .collect()
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let steps = match parse_smooth(&args.smooth) {
        Ok(steps) => steps,
        Err(err) => {
            eprintln!("usage error: {err}");
            return Ok(EXIT_USAGE);
        }
    };
    if args.task == TaskKind::Emi && !steps.is_empty() {
        eprintln!("usage error: --smooth applies only to BAH tracks");
        return Ok(EXIT_USAGE);
    }
    std::fs::create_dir_all(&args.out)?;

    let (report_json, report_csv, summary) = match args.task {
        TaskKind::Emi => {
            let preds = files::read_emi_predictions(&args.pred)?;
            let labels = files::read_emi_predictions(&args.labels)?;
            let label_map: BTreeMap<&str, &[f64; 6]> =
                labels.iter().map(|(id, v)| (id.as_str(), v)).collect();
            if preds.len() != labels.len() {
                bail!(
                    "prediction file has {} rows but labels file has {}",
                    preds.len(),
                    labels.len()
                );
            }
            let mut pred_rows = Vec::with_capacity(preds.len());
            let mut label_rows = Vec::with_capacity(preds.len());
            let mut sorted = preds.clone();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            for (id, vals) in &sorted {
                let label = label_map
                    .get(id.as_str())
                    .ok_or_else(|| anyhow::anyhow!("sample {id} missing from labels file"))?;
                pred_rows.push(*vals);
                label_rows.push(**label);
            }
            let report = emi_score(&pred_rows, &label_rows)?;
            println!("mean rho {:.6}", report.rho_mean);
            (
                serde_json::to_string_pretty(&report)?,
                report.to_csv(),
                format!("rho_mean={}", report.rho_mean),
            )
        }
        TaskKind::Bah => {
            let probs = files::read_bah_predictions(&args.pred)?;
            let labels = files::read_bah_labels_text(&args.labels)?;
            if probs.len() != labels.len() {
                bail!(
                    "prediction track has {} frames but label track has {}",
                    probs.len(),
                    labels.len()
                );
            }
            let mut track = threshold(&probs, args.tau);
            for step in &steps {
                track = match step {
                    SmoothStep::Median(width) => median_smooth(&track, *width)?,
                    SmoothStep::MinRun(min_len) => min_duration_filter(&track, *min_len)?,
                };
            }
            let report = bah_score(&track, &labels)?;
            println!("weighted F1 {:.6}", report.f1_weighted);
            (
                serde_json::to_string_pretty(&report)?,
                report.to_csv(),
                format!("f1_weighted={}", report.f1_weighted),
            )
        }
    };
    std::fs::write(args.out.join("report.json"), report_json)?;
    std::fs::write(args.out.join("report.csv"), report_csv)?;

    let mut record = RunRecord::new("eval", 0);
    record.config = serde_json::json!({
        "task": args.task,
        "pred": args.pred,
        "labels": args.labels,
        "smooth": args.smooth,
        "tau": args.tau,
    });
    record.outputs.insert("summary".into(), summary);
    record.hash_output(&args.out, "report.json")?;
    record.hash_output(&args.out, "report.csv")?;
    record.write(args.out.join("run.json"))?;
    Ok(0)
}

fn cmd_ablate(args: AblateArgs) -> Result<i32> {
    if args.train.task() != TaskKind::Bah {
        eprintln!("usage error: ablate-chunks only supports --task bah");
        return Ok(EXIT_USAGE);
    }
    let sizes: Result<Vec<f64>, _> = args
        .text_windows
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let sizes = match sizes {
        Ok(sizes) if !sizes.is_empty() => sizes,
        _ => {
            eprintln!("usage error: --text-window must be a comma-separated list of seconds");
            return Ok(EXIT_USAGE);
        }
    };
    let (config, pack, out) = match args.train.resolve() {
        Ok(parts) => parts,
        Err(err) => {
            eprintln!("usage error: {err:#}");
            return Ok(EXIT_USAGE);
        }
    };
    std::fs::create_dir_all(&out)?;

    let dataset = load_dataset(&pack)?;
    let train_samples = dataset.load_split(Split::Train)?;
    let val_samples = dataset.load_split(Split::Val)?;
    let rows = ablate_text_chunks(&config, &train_samples, &val_samples, &sizes)?;
    let csv = ablation_csv(&rows);
    std::fs::write(out.join("chunk_ablation.csv"), &csv)?;
    print!("{csv}");

    let mut record = RunRecord::new("ablate-chunks", config.seed);
    record.config = serde_json::json!({
        "train": serde_json::to_value(&config)?,
        "text_windows": sizes,
        "pack": pack,
    });
    record.inputs.insert("pack_digest".into(), pack_digest(&pack)?);
    record.hash_output(&out, "chunk_ablation.csv")?;
    record.write(out.join("run.json"))?;
    Ok(0)
}

fn parse_modalities(raw: &str) -> Result<Vec<Modality>, String> {
    let mut picked = Vec::new();
    for name in raw.split(',') {
        let name = name.trim();
        match name {
            "audio" => picked.push(Modality::Audio),
            "vision" => picked.push(Modality::Vision),
            "text" => picked.push(Modality::Text),
            _ => {
                return Err(format!(
                    "unknown modality name {name:?}; expected audio, vision, or text"
                ))
            }
        }
    }
    // Canonical order, deduplicated.
    let out: Vec<Modality> = emofuse_core::model::MODALITY_ORDER
        .into_iter()
        .filter(|m| picked.contains(m))
        .collect();
    if out.is_empty() {
        return Err("at least one modality is required".into());
    }
    Ok(out)
}

pub(crate) use parse_modalities as parse_modalities_impl;
