//! Task-specific training loops: EMI sequence-level regression and BAH
//! frame-level classification, with cosine learning-rate decay, early
//! stopping on the validation metric, and deterministic checkpoints.
//!
//! Both loops are bit-reproducible for equal `(config, data)`: shuffling and
//! frame sampling use seeded streams, and every reduction runs in a fixed
//! order.

mod adam;

pub use adam::Adam;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{Modality, Sample, SampleLabel, TaskKind, NUM_EMOTIONS};
use crate::encoders::{StubTextEmbedder, TextEmbedder};
use crate::error::{CoreError, Result};
use crate::metrics::{bah_score, emi_score, threshold, BahEvalReport, EmiEvalReport};
use crate::model::{
    grads_to_flat, init_parameters, model_gradients, BatchItem, FusionModel, LossKind, ModelConfig,
    ModelInputs, Target, MODALITY_ORDER,
};
use crate::mtl::{MtlModel, Prediction};
use crate::windowing::{bah_frame_plan, bah_inputs_at, emi_fixed_inputs, WindowConfig};

/// Full training configuration. Defaults follow the published setups:
/// EMI trains with lr 1e-4 for 30 epochs, BAH with lr 7.5e-6 for 10 epochs,
/// both with batch size 32 and cosine decay.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub modalities: Vec<Modality>,
    pub lr0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Frame stride for BAH validation/evaluation plans.
    pub stride_frames: usize,
    /// Training windows sampled per video per epoch (BAH).
    pub frames_per_video: usize,
    pub mtl: bool,
    /// Optional skewed initialization of the per-modality log-variances.
    #[serde(default)]
    pub mtl_init_s: BTreeMap<Modality, f64>,
    pub window: WindowConfig,
    pub hidden: usize,
    pub fusion_hidden: usize,
    pub fusion_out: usize,
    pub text_dim: usize,
    /// Decision threshold for BAH probabilities.
    pub tau: f64,
}

impl TrainConfig {
    pub fn emi_defaults() -> Self {
        TrainConfig {
            task: TaskKind::Emi,
            modalities: MODALITY_ORDER.to_vec(),
            lr0: 1e-4,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            patience: 5,
            stride_frames: 1,
            frames_per_video: 8,
            mtl: false,
            mtl_init_s: BTreeMap::new(),
            window: WindowConfig::default(),
            hidden: 128,
            fusion_hidden: 256,
            fusion_out: 64,
            text_dim: 32,
            tau: 0.5,
        }
    }

    pub fn bah_defaults() -> Self {
        TrainConfig {
            task: TaskKind::Bah,
            lr0: 7.5e-6,
            epochs: 10,
            ..Self::emi_defaults()
        }
    }

    pub fn defaults_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Emi => Self::emi_defaults(),
            TaskKind::Bah => Self::bah_defaults(),
        }
    }

    fn loss_kind(&self) -> LossKind {
        match self.task {
            TaskKind::Emi => LossKind::Mse,
            TaskKind::Bah => LossKind::BceLogit,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(CoreError::InvalidArgument("lr0 must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(CoreError::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(CoreError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.stride_frames < 1 || self.frames_per_video < 1 {
            return Err(CoreError::InvalidArgument(
                "stride_frames and frames_per_video must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn embedder(&self) -> StubTextEmbedder {
        StubTextEmbedder::new(self.text_dim, self.seed, self.window.marker_token.clone())
    }
}

/// Cosine decay: `lr0 * 0.5 * (1 + cos(pi * step / total_steps))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    assert!(total_steps >= 1, "total_steps must be >= 1");
    assert!(step <= total_steps, "step beyond schedule");
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos())
}

/// Mean squared error over the six intensity outputs.
pub fn mse_loss(pred: &[f64; NUM_EMOTIONS], target: &[f64; NUM_EMOTIONS]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / NUM_EMOTIONS as f64
}

/// Numerically stable binary cross entropy from the logit.
pub fn bce_logit_loss(logit: f64, label: u8) -> f64 {
    let y = label as f64;
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// One epoch's log line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    /// Learning rate applied at the first optimizer step of the epoch.
    pub lr: f64,
    /// MTL fusion weights as of the start of the epoch, configured order.
    pub weights: Option<Vec<f64>>,
}

/// Training history plus the best-epoch bookmark.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose checkpoint was kept (max validation metric).
    pub best_epoch: usize,
    pub best_val: f64,
    /// Modalities behind the optional weight columns.
    pub weight_modalities: Vec<Modality>,
}

impl TrainHistory {
    /// CSV: `epoch,train_loss,val_metric,lr[,w_<modality>...]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_metric,lr");
        if !self.weight_modalities.is_empty() {
            for m in &self.weight_modalities {
                out.push_str(&format!(",w_{m}"));
            }
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}", r.epoch, r.train_loss, r.val_metric, r.lr));
            if let Some(weights) = &r.weights {
                for w in weights {
                    out.push_str(&format!(",{w}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Early-stopping bookkeeping: stop once the metric has failed to improve
/// for more than `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopTracker {
    patience: usize,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopTracker {
    pub fn new(patience: usize) -> Self {
        EarlyStopTracker {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Records an epoch's metric; returns `(improved, should_stop)`.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> (bool, bool) {
        if metric > self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            (true, false)
        } else {
            self.bad_epochs += 1;
            (false, self.bad_epochs > self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Anything that maps assembled inputs to an output-space prediction.
pub trait Predictor {
    fn predict_item(&self, inputs: &ModelInputs) -> Result<Prediction>;
}

impl Predictor for FusionModel {
    fn predict_item(&self, inputs: &ModelInputs) -> Result<Prediction> {
        Ok(Prediction::from_task_output(self.predict(inputs)?))
    }
}

impl Predictor for MtlModel {
    fn predict_item(&self, inputs: &ModelInputs) -> Result<Prediction> {
        self.predict(inputs)
    }
}

fn epoch_rng(seed: u64, epoch: usize, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt,
    )
}

fn derive_dims(samples: &[Sample], config: &TrainConfig) -> Result<(usize, usize)> {
    let mut audio_dim = None;
    let mut vision_dim = None;
    for s in samples {
        if audio_dim.is_none() {
            if let Some(track) = &s.audio {
                let vad_extra = if s.vad.is_some() { crate::datamodel::VAD_DIM } else { 0 };
                audio_dim = Some(track.dim() + vad_extra);
            }
        }
        if vision_dim.is_none() {
            if let Some(track) = &s.vision {
                vision_dim = Some(track.dim());
            }
        }
    }
    let uses = |m: Modality| config.modalities.contains(&m);
    if uses(Modality::Audio) && audio_dim.is_none() {
        return Err(CoreError::InvalidArgument(
            "audio modality configured but no sample has an audio track".into(),
        ));
    }
    if uses(Modality::Vision) && vision_dim.is_none() {
        return Err(CoreError::InvalidArgument(
            "vision modality configured but no sample has a vision track".into(),
        ));
    }
    Ok((audio_dim.unwrap_or(1), vision_dim.unwrap_or(1)))
}

fn build_model_config(config: &TrainConfig, train: &[Sample]) -> Result<ModelConfig> {
    let (audio_dim, vision_dim) = derive_dims(train, config)?;
    let mut model_config = ModelConfig::new(config.task, &config.modalities);
    model_config.audio_dim = audio_dim;
    model_config.vision_dim = vision_dim;
    model_config.text_dim = config.text_dim;
    model_config.hidden = config.hidden;
    model_config.fusion_hidden = config.fusion_hidden;
    model_config.fusion_out = config.fusion_out;
    Ok(model_config)
}

fn emi_target(sample: &Sample) -> Result<Target> {
    match &sample.label {
        SampleLabel::Emi(l) => Ok(Target::Emi(l.intensities)),
        _ => Err(CoreError::InvalidArgument(format!(
            "sample {} is not an EMI sample",
            sample.id
        ))),
    }
}

fn emi_item(sample: &Sample, window: &WindowConfig, embedder: &StubTextEmbedder) -> Result<BatchItem> {
    let assembled = emi_fixed_inputs(sample, window)?;
    let text = assembled.tokens.as_ref().map(|t| embedder.embed(t));
    Ok(BatchItem {
        id: sample.id.clone(),
        inputs: ModelInputs {
            audio: assembled.audio,
            vision: assembled.vision,
            text,
        },
        target: emi_target(sample)?,
    })
}

fn bah_item(
    sample: &Sample,
    window: &WindowConfig,
    embedder: &StubTextEmbedder,
    frame_index: usize,
    center_time_s: f64,
) -> Result<BatchItem> {
    let labels = match &sample.label {
        SampleLabel::Bah(track) => track,
        _ => {
            return Err(CoreError::InvalidArgument(format!(
                "sample {} is not a BAH sample",
                sample.id
            )))
        }
    };
    let assembled = bah_inputs_at(sample, window, center_time_s)?;
    let text = assembled.tokens.as_ref().map(|t| embedder.embed(t));
    Ok(BatchItem {
        id: format!("{}@{}", sample.id, frame_index),
        inputs: ModelInputs {
            audio: assembled.audio,
            vision: assembled.vision,
            text,
        },
        target: Target::Bah(labels.labels[frame_index]),
    })
}

/// Scores EMI predictions for a set of samples.
pub fn evaluate_emi<P: Predictor>(
    predictor: &P,
    samples: &[Sample],
    window: &WindowConfig,
    embedder: &StubTextEmbedder,
) -> Result<EmiEvalReport> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for sample in samples {
        let item = emi_item(sample, window, embedder)?;
        match predictor.predict_item(&item.inputs)? {
            Prediction::Emi(vals) => preds.push(vals),
            Prediction::BahProb(_) => {
                return Err(CoreError::InvalidArgument(
                    "BAH predictor used for EMI evaluation".into(),
                ))
            }
        }
        match item.target {
            Target::Emi(vals) => labels.push(vals),
            _ => unreachable!(),
        }
    }
    emi_score(&preds, &labels)
}

/// Scores BAH predictions over every planned frame of every sample; also
/// returns the per-sample probability tracks (at the plan's stride).
pub fn evaluate_bah<P: Predictor>(
    predictor: &P,
    samples: &[Sample],
    window: &WindowConfig,
    embedder: &StubTextEmbedder,
    stride_frames: usize,
    tau: f64,
) -> Result<(BahEvalReport, Vec<(String, Vec<f64>)>)> {
    let mut all_probs = Vec::new();
    let mut all_labels = Vec::new();
    let mut tracks = Vec::new();
    for sample in samples {
        let plan = bah_frame_plan(sample, stride_frames)?;
        let labels = match &sample.label {
            SampleLabel::Bah(track) => track,
            _ => unreachable!("plan construction enforces BAH"),
        };
        let mut probs = Vec::with_capacity(plan.len());
        for entry in &plan {
            let item = bah_item(sample, window, embedder, entry.frame_index, entry.center_time_s)?;
            match predictor.predict_item(&item.inputs)? {
                Prediction::BahProb(p) => probs.push(p),
                Prediction::Emi(_) => {
                    return Err(CoreError::InvalidArgument(
                        "EMI predictor used for BAH evaluation".into(),
                    ))
                }
            }
            all_labels.push(labels.labels[entry.frame_index]);
        }
        all_probs.extend(probs.iter().copied());
        tracks.push((sample.id.clone(), probs));
    }
    let preds = threshold(&all_probs, tau);
    Ok((bah_score(&preds, &all_labels)?, tracks))
}

fn check_task(samples: &[Sample], task: TaskKind, split: &str) -> Result<()> {
    if samples.is_empty() {
        return Err(CoreError::InvalidArgument(format!("{split} split is empty")));
    }
    for s in samples {
        if s.task != task {
            return Err(CoreError::InvalidArgument(format!(
                "sample {} has task {}, expected {}",
                s.id, s.task, task
            )));
        }
    }
    Ok(())
}

/// Items for one training epoch, already shuffled.
fn epoch_items(
    config: &TrainConfig,
    train: &[Sample],
    embedder: &StubTextEmbedder,
    epoch: usize,
    emi_cache: Option<&[BatchItem]>,
) -> Result<Vec<BatchItem>> {
    let mut items: Vec<BatchItem> = match config.task {
        TaskKind::Emi => emi_cache.expect("emi items precomputed").to_vec(),
        TaskKind::Bah => {
            let mut out = Vec::new();
            for (sample_idx, sample) in train.iter().enumerate() {
                let labels = match &sample.label {
                    SampleLabel::Bah(track) => track,
                    _ => {
                        return Err(CoreError::InvalidArgument(format!(
                            "sample {} is not a BAH sample",
                            sample.id
                        )))
                    }
                };
                let frames = labels.frames();
                let budget = config.frames_per_video.min(frames);
                let mut rng = epoch_rng(config.seed, epoch, 0x1000 + sample_idx as u64);
                let chosen = rand::seq::index::sample(&mut rng, frames, budget);
                let mut indices: Vec<usize> = chosen.into_iter().collect();
                indices.sort_unstable();
                for frame_index in indices {
                    out.push(bah_item(
                        sample,
                        &config.window,
                        embedder,
                        frame_index,
                        labels.frame_time_s(frame_index),
                    )?);
                }
            }
            out
        }
    };
    let mut rng = epoch_rng(config.seed, epoch, 0x2000);
    items.shuffle(&mut rng);
    Ok(items)
}

fn steps_per_epoch(config: &TrainConfig, train: &[Sample]) -> usize {
    let items = match config.task {
        TaskKind::Emi => train.len(),
        TaskKind::Bah => train
            .iter()
            .map(|s| match &s.label {
                SampleLabel::Bah(track) => config.frames_per_video.min(track.frames()),
                _ => 0,
            })
            .sum(),
    };
    items.div_ceil(config.batch_size).max(1)
}

/// Training outcome: the best checkpoint's model plus the history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FusionModel,
    pub history: TrainHistory,
}

fn val_metric_single(
    model: &FusionModel,
    config: &TrainConfig,
    val: &[Sample],
    embedder: &StubTextEmbedder,
) -> Result<f64> {
    match config.task {
        TaskKind::Emi => Ok(evaluate_emi(model, val, &config.window, embedder)?.rho_mean),
        TaskKind::Bah => Ok(evaluate_bah(
            model,
            val,
            &config.window,
            embedder,
            config.stride_frames,
            config.tau,
        )?
        .0
        .f1_weighted),
    }
}

/// Trains one fusion model. Deterministic given `(config, data)`; returns
/// the parameters of the epoch with the best validation metric.
pub fn train(config: &TrainConfig, train_samples: &[Sample], val_samples: &[Sample]) -> Result<TrainOutcome> {
    config.validate()?;
    check_task(train_samples, config.task, "train")?;
    check_task(val_samples, config.task, "val")?;

    let embedder = config.embedder();
    let model_config = build_model_config(config, train_samples)?;
    let mut model = init_parameters(config.seed, &model_config)?;
    let mut flat = model.to_flat();
    let mut optimizer = Adam::new(flat.len());
    let loss_kind = config.loss_kind();

    let emi_cache: Option<Vec<BatchItem>> = match config.task {
        TaskKind::Emi => Some(
            train_samples
                .iter()
                .map(|s| emi_item(s, &config.window, &embedder))
                .collect::<Result<_>>()?,
        ),
        TaskKind::Bah => None,
    };

    let per_epoch = steps_per_epoch(config, train_samples);
    let total_steps = (config.epochs * per_epoch).max(1);
    let mut step = 0usize;

    let mut records = Vec::new();
    let mut tracker = EarlyStopTracker::new(config.patience);
    let mut best_flat = flat.clone();

    for epoch in 1..=config.epochs {
        let epoch_lr = cosine_lr(step, total_steps, config.lr0);
        let items = epoch_items(config, train_samples, &embedder, epoch, emi_cache.as_deref())?;
        let mut loss_sum = 0.0;
        for batch in items.chunks(config.batch_size) {
            let lr = cosine_lr(step, total_steps, config.lr0);
            let (batch_loss, mut grads) = model_gradients(&model, batch, loss_kind)?;
            grads.scale(1.0 / batch.len() as f64);
            let flat_grads = grads_to_flat(&grads);
            optimizer.step(&mut flat, &flat_grads, lr);
            model.from_flat(&flat)?;
            loss_sum += batch_loss;
            step += 1;
        }
        let train_loss = loss_sum / items.len() as f64;
        let val_metric = val_metric_single(&model, config, val_samples, &embedder)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_metric,
            lr: epoch_lr,
            weights: None,
        });
        let (improved, should_stop) = tracker.observe(epoch, val_metric);
        if improved {
            best_flat = flat.clone();
        }
        if should_stop {
            break;
        }
    }

    model.from_flat(&best_flat)?;
    Ok(TrainOutcome {
        model,
        history: TrainHistory {
            records,
            best_epoch: tracker.best_epoch(),
            best_val: tracker.best(),
            weight_modalities: Vec::new(),
        },
    })
}

/// MTL training outcome.
#[derive(Debug, Clone)]
pub struct MtlTrainOutcome {
    pub model: MtlModel,
    pub history: TrainHistory,
}

fn val_metric_mtl(
    model: &MtlModel,
    config: &TrainConfig,
    val: &[Sample],
    embedder: &StubTextEmbedder,
) -> Result<f64> {
    match config.task {
        TaskKind::Emi => Ok(evaluate_emi(model, val, &config.window, embedder)?.rho_mean),
        TaskKind::Bah => Ok(evaluate_bah(
            model,
            val,
            &config.window,
            embedder,
            config.stride_frames,
            config.tau,
        )?
        .0
        .f1_weighted),
    }
}

/// Multi-task training: each modality trains its own unimodal model under
/// the uncertainty-weighted total loss, and validation scores the convex
/// fusion of their predictions. Fusion weights are logged per epoch (state
/// at the start of the epoch).
pub fn train_mtl(config: &TrainConfig, train_samples: &[Sample], val_samples: &[Sample]) -> Result<MtlTrainOutcome> {
    config.validate()?;
    check_task(train_samples, config.task, "train")?;
    check_task(val_samples, config.task, "val")?;
    if config.modalities.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "multi-task training needs at least 2 modalities".into(),
        ));
    }

    let embedder = config.embedder();
    let model_config = build_model_config(config, train_samples)?;
    let mut mtl = MtlModel::init(config.seed, &model_config, &config.mtl_init_s)?;
    let mut flat = mtl.to_flat();
    let mut optimizer = Adam::new(flat.len());
    let loss_kind = config.loss_kind();
    let n_modalities = mtl.modalities.len();
    let model_param_counts: Vec<usize> = mtl.models.iter().map(|m| m.param_count()).collect();

    let emi_cache: Option<Vec<BatchItem>> = match config.task {
        TaskKind::Emi => Some(
            train_samples
                .iter()
                .map(|s| emi_item(s, &config.window, &embedder))
                .collect::<Result<_>>()?,
        ),
        TaskKind::Bah => None,
    };

    let per_epoch = steps_per_epoch(config, train_samples);
    let total_steps = (config.epochs * per_epoch).max(1);
    let mut step = 0usize;

    let mut records = Vec::new();
    let mut tracker = EarlyStopTracker::new(config.patience);
    let mut best_flat = flat.clone();

    for epoch in 1..=config.epochs {
        let epoch_lr = cosine_lr(step, total_steps, config.lr0);
        // Weights as of the start of this epoch, in configured order.
        let weight_map = mtl.weights();
        let epoch_weights: Vec<f64> = mtl.modalities.iter().map(|m| weight_map[m]).collect();

        let items = epoch_items(config, train_samples, &embedder, epoch, emi_cache.as_deref())?;
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for batch in items.chunks(config.batch_size) {
            let lr = cosine_lr(step, total_steps, config.lr0);
            let batch_len = batch.len() as f64;
            let mut flat_grads = vec![0.0; flat.len()];
            let mut cursor = 0usize;
            let mut total_loss = 0.0;
            let mut s_grads = vec![0.0; n_modalities];
            for k in 0..n_modalities {
                let (loss_k_sum, mut grads_k) = model_gradients(&mtl.models[k], batch, loss_kind)?;
                let mean_loss_k = loss_k_sum / batch_len;
                let s_k = mtl.s[k];
                let precision = (-s_k).exp();
                grads_k.scale(precision / batch_len);
                let flat_k = grads_to_flat(&grads_k);
                flat_grads[cursor..cursor + flat_k.len()].copy_from_slice(&flat_k);
                cursor += model_param_counts[k];
                total_loss += precision * mean_loss_k + s_k;
                s_grads[k] = 1.0 - precision * mean_loss_k;
            }
            flat_grads[cursor..cursor + n_modalities].copy_from_slice(&s_grads);
            optimizer.step(&mut flat, &flat_grads, lr);
            mtl.from_flat(&flat)?;
            loss_sum += total_loss;
            n_batches += 1;
            step += 1;
        }
        let train_loss = loss_sum / n_batches as f64;
        let val_metric = val_metric_mtl(&mtl, config, val_samples, &embedder)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_metric,
            lr: epoch_lr,
            weights: Some(epoch_weights),
        });
        let (improved, should_stop) = tracker.observe(epoch, val_metric);
        if improved {
            best_flat = flat.clone();
        }
        if should_stop {
            break;
        }
    }

    mtl.from_flat(&best_flat)?;
    Ok(MtlTrainOutcome {
        model: mtl,
        history: TrainHistory {
            records,
            best_epoch: tracker.best_epoch(),
            best_val: tracker.best(),
            weight_modalities: config
                .modalities
                .iter()
                .filter(|m| MODALITY_ORDER.contains(m))
                .copied()
                .collect(),
        },
    })
}

/// Text-chunk-size ablation harness: retrains per window size and reports
/// the best validation weighted F1 for each. Rows come back as
/// `(window_s, f1_val)` in the order given.
pub fn ablate_text_chunks(
    config: &TrainConfig,
    train_samples: &[Sample],
    val_samples: &[Sample],
    window_sizes: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if window_sizes.is_empty() {
        return Err(CoreError::InvalidArgument(
            "ablation needs at least one window size".into(),
        ));
    }
    let mut rows = Vec::with_capacity(window_sizes.len());
    for &size in window_sizes {
        let mut run_config = config.clone();
        run_config.window.text_window_s = size;
        let outcome = train(&run_config, train_samples, val_samples)?;
        rows.push((size, outcome.history.best_val));
    }
    Ok(rows)
}

/// Serializes ablation rows as the `window_s,f1_val` CSV.
pub fn ablation_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("window_s,f1_val\n");
    for (size, f1) in rows {
        out.push_str(&format!("{size},{f1}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 100, 1e-4), 1e-4);
        assert_eq!(cosine_lr(100, 100, 1e-4), 0.0);
        assert!((cosine_lr(50, 100, 1e-4) - 5e-5).abs() < 1e-12);
    }

    #[test]
    fn loss_hand_values() {
        let target = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(mse_loss(&target, &target), 0.0);
        assert_eq!(mse_loss(&[0.0; 6], &[1.0; 6]), 1.0);
        assert!((bce_logit_loss(0.0, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_logit_loss(0.0, 1) - 0.693147).abs() < 1e-6);
        assert!(bce_logit_loss(5.0, 1) < bce_logit_loss(-5.0, 1));
    }

    #[test]
    fn patience_zero_stops_after_second_epoch() {
        let mut tracker = EarlyStopTracker::new(0);
        let (improved, stop) = tracker.observe(1, 0.5);
        assert!(improved && !stop);
        let (improved, stop) = tracker.observe(2, 0.4);
        assert!(!improved && stop);
        assert_eq!(tracker.best_epoch(), 1);
    }

    #[test]
    fn patience_tolerates_plateaus() {
        let mut tracker = EarlyStopTracker::new(2);
        assert_eq!(tracker.observe(1, 0.5), (true, false));
        assert_eq!(tracker.observe(2, 0.5), (false, false));
        assert_eq!(tracker.observe(3, 0.49), (false, false));
        assert_eq!(tracker.observe(4, 0.48), (false, true));
    }
}
