//! Train-command arguments and config-file merging.
//!
//! Precedence: built-in task defaults, then the optional TOML config file,
//! then explicit command-line flags.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Deserialize;

use emofuse_core::datamodel::{Modality, TaskKind};
use emofuse_core::training::TrainConfig;

/// Flags shared by `train` and `ablate-chunks`. The text window in seconds
/// lives on [`TrainArgs`] only, because the ablation command owns the
/// `--text-window` name for its size list.
#[derive(Args)]
pub struct CommonTrainArgs {
    /// Task kind: emi or bah.
    #[arg(long, value_parser = super::parse_task)]
    task: TaskKind,
    /// Pack root (or manifest path).
    #[arg(long)]
    pack: PathBuf,
    /// Output directory for config, history, checkpoint, and run.json.
    #[arg(long)]
    out: PathBuf,
    /// Optional TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated modality subset, e.g. `text,vision`.
    #[arg(long)]
    modalities: Option<String>,
    /// Train the uncertainty-weighted multi-task variant.
    #[arg(long)]
    mtl: bool,
    /// Skewed initial log-variances, e.g. `text=-1.1,audio=0`.
    #[arg(long)]
    mtl_init: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    fusion_hidden: Option<usize>,
    #[arg(long)]
    fusion_out: Option<usize>,
    #[arg(long)]
    text_dim: Option<usize>,
    #[arg(long)]
    stride_frames: Option<usize>,
    #[arg(long)]
    frames_per_video: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    audio_window: Option<f64>,
    #[arg(long)]
    vision_window: Option<f64>,
    #[arg(long)]
    vision_frames: Option<usize>,
    #[arg(long)]
    text_max_tokens: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// Text window length in seconds (BAH context window).
    #[arg(long)]
    text_window: Option<f64>,
}

impl TrainArgs {
    pub fn task(&self) -> TaskKind {
        self.common.task()
    }

    pub fn resolve(&self) -> Result<(TrainConfig, PathBuf, PathBuf)> {
        let (mut config, pack, out) = self.common.resolve()?;
        if let Some(v) = self.text_window {
            config.window.text_window_s = v;
        }
        Ok((config, pack, out))
    }
}

/// Config-file schema: every field optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    modalities: Option<Vec<String>>,
    mtl: Option<bool>,
    lr0: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    patience: Option<usize>,
    hidden: Option<usize>,
    fusion_hidden: Option<usize>,
    fusion_out: Option<usize>,
    text_dim: Option<usize>,
    stride_frames: Option<usize>,
    frames_per_video: Option<usize>,
    tau: Option<f64>,
    window: Option<FileWindowConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileWindowConfig {
    audio_window_s: Option<f64>,
    text_window_s: Option<f64>,
    vision_window_s: Option<f64>,
    vision_frames: Option<usize>,
    text_max_tokens: Option<usize>,
    marker_token: Option<String>,
}

fn parse_mtl_init(raw: &str) -> Result<BTreeMap<Modality, f64>> {
    let mut out = BTreeMap::new();
    for pair in raw.split(',') {
        let (name, value) = pair
            .split_once('=')
            .with_context(|| format!("bad mtl-init entry {pair:?}; expected modality=value"))?;
        let modality = match name.trim() {
            "audio" => Modality::Audio,
            "vision" => Modality::Vision,
            "text" => Modality::Text,
            other => anyhow::bail!("unknown modality {other:?} in --mtl-init"),
        };
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("bad mtl-init value in {pair:?}"))?;
        out.insert(modality, value);
    }
    Ok(out)
}

impl TrainArgs {
    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Resolves defaults, config file, and flags into a full [`TrainConfig`].
    /// Errors here are usage errors (exit 2).
    pub fn resolve(&self) -> Result<(TrainConfig, PathBuf, PathBuf)> {
        let mut config = TrainConfig::defaults_for(self.task);

        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            let file: FileConfig = toml::from_str(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?;
            apply_file_config(&mut config, file)?;
        }

        if let Some(raw) = &self.modalities {
            config.modalities =
                super::parse_modalities_impl(raw).map_err(|msg| anyhow::anyhow!(msg))?;
        }
        if self.mtl {
            config.mtl = true;
        }
        if let Some(raw) = &self.mtl_init {
            config.mtl_init_s = parse_mtl_init(raw)?;
        }
        if let Some(v) = self.lr {
            config.lr0 = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.patience {
            config.patience = v;
        }
        if let Some(v) = self.hidden {
            config.hidden = v;
        }
        if let Some(v) = self.fusion_hidden {
            config.fusion_hidden = v;
        }
        if let Some(v) = self.fusion_out {
            config.fusion_out = v;
        }
        if let Some(v) = self.text_dim {
            config.text_dim = v;
        }
        if let Some(v) = self.stride_frames {
            config.stride_frames = v;
        }
        if let Some(v) = self.frames_per_video {
            config.frames_per_video = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.audio_window {
            config.window.audio_window_s = v;
        }
        if let Some(v) = self.text_window {
            config.window.text_window_s = v;
        }
        if let Some(v) = self.vision_window {
            config.window.vision_window_s = v;
        }
        if let Some(v) = self.vision_frames {
            config.window.vision_frames = v;
        }
        if let Some(v) = self.text_max_tokens {
            config.window.text_max_tokens = v;
        }

        Ok((config, self.pack.clone(), self.out.clone()))
    }
}

fn apply_file_config(config: &mut TrainConfig, file: FileConfig) -> Result<()> {
    if let Some(names) = file.modalities {
        let joined = names.join(",");
        config.modalities =
            super::parse_modalities_impl(&joined).map_err(|msg| anyhow::anyhow!(msg))?;
    }
    if let Some(v) = file.mtl {
        config.mtl = v;
    }
    if let Some(v) = file.lr0 {
        config.lr0 = v;
    }
    if let Some(v) = file.epochs {
        config.epochs = v;
    }
    if let Some(v) = file.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = file.seed {
        config.seed = v;
    }
    if let Some(v) = file.patience {
        config.patience = v;
    }
    if let Some(v) = file.hidden {
        config.hidden = v;
    }
    if let Some(v) = file.fusion_hidden {
        config.fusion_hidden = v;
    }
    if let Some(v) = file.fusion_out {
        config.fusion_out = v;
    }
    if let Some(v) = file.text_dim {
        config.text_dim = v;
    }
    if let Some(v) = file.stride_frames {
        config.stride_frames = v;
    }
    if let Some(v) = file.frames_per_video {
        config.frames_per_video = v;
    }
    if let Some(v) = file.tau {
        config.tau = v;
    }
    if let Some(window) = file.window {
        if let Some(v) = window.audio_window_s {
            config.window.audio_window_s = v;
        }
        if let Some(v) = window.text_window_s {
            config.window.text_window_s = v;
        }
        if let Some(v) = window.vision_window_s {
            config.window.vision_window_s = v;
        }
        if let Some(v) = window.vision_frames {
            config.window.vision_frames = v;
        }
        if let Some(v) = window.text_max_tokens {
            config.window.text_max_tokens = v;
        }
        if let Some(v) = window.marker_token {
            config.window.marker_token = v;
        }
    }
    Ok(())
}
