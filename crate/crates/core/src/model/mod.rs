//! The trainable architecture: per-modality two-layer LSTM temporal heads,
//! a two-layer Tanh fusion MLP over the concatenated modality vectors, and
//! one task head (6 sigmoid intensities for EMI, a single logit for BAH).
//!
//! The text path bypasses the recurrent heads and feeds its pooled embedding
//! straight into fusion. Absent modalities contribute a zero block plus a
//! presence flag, so arbitrary modality subsets train in one codebase.
//! Gradients are hand-derived and exact; the finite-difference contract is
//! enforced in tests.

mod checkpoint;
mod lstm;
mod mlp;

pub use checkpoint::{load_model, read_param_blob, save_model, write_param_blob, CheckpointMeta};
pub use lstm::{Lstm2, Lstm2Grads, LstmLayer, LstmLayerGrads};
pub use mlp::{sigmoid, Affine, AffineGrads, FusionMlp, FusionMlpGrads};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Modality, TaskKind, NUM_EMOTIONS};
use crate::error::{CoreError, Result};
use crate::windowing::ChunkView;

/// Canonical modality order for fusion-input assembly and weight logs.
pub const MODALITY_ORDER: [Modality; 3] = [Modality::Audio, Modality::Vision, Modality::Text];

/// Architecture dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: TaskKind,
    /// Configured modalities, kept in canonical order.
    pub modalities: Vec<Modality>,
    /// Audio-branch input width (audio features plus VAD channels).
    pub audio_dim: usize,
    pub vision_dim: usize,
    pub text_dim: usize,
    /// LSTM hidden size per layer.
    pub hidden: usize,
    /// Fusion MLP hidden width.
    pub fusion_hidden: usize,
    /// Fusion MLP output width (task-head input).
    pub fusion_out: usize,
}

impl ModelConfig {
    pub fn new(task: TaskKind, modalities: &[Modality]) -> Self {
        let mut normalized: Vec<Modality> = MODALITY_ORDER
            .into_iter()
            .filter(|m| modalities.contains(m))
            .collect();
        if normalized.is_empty() {
            normalized = MODALITY_ORDER.to_vec();
        }
        ModelConfig {
            task,
            modalities: normalized,
            audio_dim: 16,
            vision_dim: 16,
            text_dim: 32,
            hidden: 128,
            fusion_hidden: 256,
            fusion_out: 64,
        }
    }

    pub fn uses(&self, modality: Modality) -> bool {
        self.modalities.contains(&modality)
    }

    /// Concatenated fusion-input width: one block per configured modality
    /// plus one presence flag each.
    pub fn fusion_in(&self) -> usize {
        let mut dim = 0;
        if self.uses(Modality::Audio) {
            dim += self.hidden;
        }
        if self.uses(Modality::Vision) {
            dim += self.hidden;
        }
        if self.uses(Modality::Text) {
            dim += self.text_dim;
        }
        dim + self.modalities.len()
    }

    pub fn head_out(&self) -> usize {
        match self.task {
            TaskKind::Emi => NUM_EMOTIONS,
            TaskKind::Bah => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(CoreError::InvalidArgument("no modalities configured".into()));
        }
        for &(name, dim) in &[
            ("hidden", self.hidden),
            ("fusion_hidden", self.fusion_hidden),
            ("fusion_out", self.fusion_out),
        ] {
            if dim == 0 {
                return Err(CoreError::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Model-side per-sample inputs: chunks for the recurrent branches, a pooled
/// embedding for text. `None` marks an absent modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInputs {
    pub audio: Option<ChunkView>,
    pub vision: Option<ChunkView>,
    pub text: Option<Vec<f64>>,
}

/// Raw task output: EMI intensities are post-sigmoid, BAH is the logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskOutput {
    Emi([f64; NUM_EMOTIONS]),
    Bah(f64),
}

/// Training target for one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Emi([f64; NUM_EMOTIONS]),
    Bah(u8),
}

/// One batch element.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub id: String,
    pub inputs: ModelInputs,
    pub target: Target,
}

/// Loss attached to the task head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared error over the six sigmoid outputs.
    Mse,
    /// Binary cross entropy computed stably from the logit.
    BceLogit,
}

/// Parameter container for the whole architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub config: ModelConfig,
    pub seed: u64,
    pub audio_head: Option<Lstm2>,
    pub vision_head: Option<Lstm2>,
    pub fusion: FusionMlp,
    pub head: Affine,
}

/// Gradients mirroring [`FusionModel`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub audio_head: Option<Lstm2Grads>,
    pub vision_head: Option<Lstm2Grads>,
    pub fusion: FusionMlpGrads,
    pub head: AffineGrads,
}

impl ModelGrads {
    pub fn scale(&mut self, factor: f64) {
        let scale_lstm = |g: &mut Lstm2Grads| {
            for layer in [&mut g.layer1, &mut g.layer2] {
                layer.w.mapv_inplace(|v| v * factor);
                layer.u.mapv_inplace(|v| v * factor);
                layer.b.mapv_inplace(|v| v * factor);
            }
        };
        if let Some(g) = &mut self.audio_head {
            scale_lstm(g);
        }
        if let Some(g) = &mut self.vision_head {
            scale_lstm(g);
        }
        for g in [&mut self.fusion.l1, &mut self.fusion.l2, &mut self.head] {
            g.w.mapv_inplace(|v| v * factor);
            g.b.mapv_inplace(|v| v * factor);
        }
    }
}

fn uniform_fill(rng: &mut ChaCha8Rng, values: &mut Array2<f64>, fan_in: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in values.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
}

fn init_lstm(rng: &mut ChaCha8Rng, input_dim: usize, hidden: usize) -> Lstm2 {
    let mut lstm = Lstm2::zeros(input_dim, hidden);
    for layer in [&mut lstm.layer1, &mut lstm.layer2] {
        let fan_in = layer.input_dim;
        uniform_fill(rng, &mut layer.w, fan_in);
        uniform_fill(rng, &mut layer.u, layer.hidden);
        // Gate biases zero, forget gate +1.
        for k in 0..layer.hidden {
            layer.b[layer.hidden + k] = 1.0;
        }
    }
    lstm
}

/// Deterministic initialization: weights uniform in `±1/sqrt(fan_in)`,
/// biases zero except the forget gates at +1.
pub fn init_parameters(seed: u64, config: &ModelConfig) -> Result<FusionModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let audio_head = config
        .uses(Modality::Audio)
        .then(|| init_lstm(&mut rng, config.audio_dim, config.hidden));
    let vision_head = config
        .uses(Modality::Vision)
        .then(|| init_lstm(&mut rng, config.vision_dim, config.hidden));

    let fusion_in = config.fusion_in();
    let mut fusion = FusionMlp::zeros(fusion_in, config.fusion_hidden, config.fusion_out);
    uniform_fill(&mut rng, &mut fusion.l1.w, fusion_in);
    uniform_fill(&mut rng, &mut fusion.l2.w, config.fusion_hidden);
    let mut head = Affine::zeros(config.head_out(), config.fusion_out);
    uniform_fill(&mut rng, &mut head.w, config.fusion_out);

    Ok(FusionModel {
        config: config.clone(),
        seed,
        audio_head,
        vision_head,
        fusion,
        head,
    })
}

/// Forward pass of one recurrent head over a chunk; the spec-level
/// `recurrent_forward` operation.
pub fn recurrent_forward(head: &Lstm2, chunk: &ChunkView) -> Result<Array1<f64>> {
    if chunk.dim() != head.layer1.input_dim {
        return Err(CoreError::ShapeMismatch {
            context: "recurrent_forward".into(),
            expected: format!("{} columns", head.layer1.input_dim),
            found: format!("{} columns", chunk.dim()),
        });
    }
    Ok(head.forward(chunk).0)
}

struct ForwardCache {
    audio: Option<lstm::Lstm2Cache>,
    vision: Option<lstm::Lstm2Cache>,
    fusion: mlp::FusionMlpCache,
    head_in: Array1<f64>,
    raw: Array1<f64>,
    /// Offsets of each block inside the fusion input, canonical order.
    block_offsets: BlockOffsets,
}

#[derive(Debug, Clone, Copy, Default)]
struct BlockOffsets {
    audio: Option<usize>,
    vision: Option<usize>,
}

impl FusionModel {
    /// Pure fusion step: maps already-computed modality vectors to the task
    /// output. `None` entries use the absent-modality zero block.
    pub fn fusion_forward(
        &self,
        audio_vec: Option<&Array1<f64>>,
        vision_vec: Option<&Array1<f64>>,
        text_vec: Option<&[f64]>,
    ) -> Result<TaskOutput> {
        let (x, _) = self.assemble_fusion_input(audio_vec, vision_vec, text_vec)?;
        let (fused, _) = self.fusion.forward(x);
        let raw = self.head.forward(&fused);
        Ok(self.task_output(&raw))
    }

    fn task_output(&self, raw: &Array1<f64>) -> TaskOutput {
        match self.config.task {
            TaskKind::Emi => {
                let mut out = [0.0; NUM_EMOTIONS];
                for (slot, &z) in out.iter_mut().zip(raw.iter()) {
                    *slot = sigmoid(z);
                }
                TaskOutput::Emi(out)
            }
            TaskKind::Bah => TaskOutput::Bah(raw[0]),
        }
    }

    fn assemble_fusion_input(
        &self,
        audio_vec: Option<&Array1<f64>>,
        vision_vec: Option<&Array1<f64>>,
        text_vec: Option<&[f64]>,
    ) -> Result<(Array1<f64>, BlockOffsets)> {
        let config = &self.config;
        let mut x = Array1::zeros(config.fusion_in());
        let mut offsets = BlockOffsets::default();
        let mut cursor = 0;
        let mut flags = Vec::with_capacity(config.modalities.len());
        let mut any_present = false;

        if config.uses(Modality::Audio) {
            offsets.audio = Some(cursor);
            if let Some(v) = audio_vec {
                for (k, &val) in v.iter().enumerate() {
                    x[cursor + k] = val;
                }
                flags.push(1.0);
                any_present = true;
            } else {
                flags.push(0.0);
            }
            cursor += config.hidden;
        }
        if config.uses(Modality::Vision) {
            offsets.vision = Some(cursor);
            if let Some(v) = vision_vec {
                for (k, &val) in v.iter().enumerate() {
                    x[cursor + k] = val;
                }
                flags.push(1.0);
                any_present = true;
            } else {
                flags.push(0.0);
            }
            cursor += config.hidden;
        }
        if config.uses(Modality::Text) {
            if let Some(v) = text_vec {
                if v.len() != config.text_dim {
                    return Err(CoreError::ShapeMismatch {
                        context: "text embedding".into(),
                        expected: format!("{}", config.text_dim),
                        found: format!("{}", v.len()),
                    });
                }
                for (k, &val) in v.iter().enumerate() {
                    x[cursor + k] = val;
                }
                flags.push(1.0);
                any_present = true;
            } else {
                flags.push(0.0);
            }
            cursor += config.text_dim;
        }
        for flag in flags {
            x[cursor] = flag;
            cursor += 1;
        }
        if !any_present {
            return Err(CoreError::InvalidArgument(
                "all configured modalities are absent".into(),
            ));
        }
        Ok((x, offsets))
    }

    fn forward_cached(&self, inputs: &ModelInputs) -> Result<(TaskOutput, ForwardCache)> {
        let (audio_vec, audio_cache) = match (&self.audio_head, &inputs.audio) {
            (Some(head), Some(chunk)) => {
                if chunk.dim() != head.layer1.input_dim {
                    return Err(CoreError::ShapeMismatch {
                        context: "audio chunk".into(),
                        expected: format!("{} columns", head.layer1.input_dim),
                        found: format!("{} columns", chunk.dim()),
                    });
                }
                let (v, cache) = head.forward(chunk);
                (Some(v), Some(cache))
            }
            _ => (None, None),
        };
        let (vision_vec, vision_cache) = match (&self.vision_head, &inputs.vision) {
            (Some(head), Some(chunk)) => {
                if chunk.dim() != head.layer1.input_dim {
                    return Err(CoreError::ShapeMismatch {
                        context: "vision chunk".into(),
                        expected: format!("{} columns", head.layer1.input_dim),
                        found: format!("{} columns", chunk.dim()),
                    });
                }
                let (v, cache) = head.forward(chunk);
                (Some(v), Some(cache))
            }
            _ => (None, None),
        };
        let text_vec = if self.config.uses(Modality::Text) {
            inputs.text.as_deref()
        } else {
            None
        };

        let (x, block_offsets) =
            self.assemble_fusion_input(audio_vec.as_ref(), vision_vec.as_ref(), text_vec)?;
        let (fused, fusion_cache) = self.fusion.forward(x);
        let raw = self.head.forward(&fused);
        let out = self.task_output(&raw);
        Ok((
            out,
            ForwardCache {
                audio: audio_cache,
                vision: vision_cache,
                fusion: fusion_cache,
                head_in: fused,
                raw,
                block_offsets,
            },
        ))
    }

    /// Deterministic forward pass.
    pub fn predict(&self, inputs: &ModelInputs) -> Result<TaskOutput> {
        Ok(self.forward_cached(inputs)?.0)
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            audio_head: self.audio_head.as_ref().map(|h| h.zero_grads()),
            vision_head: self.vision_head.as_ref().map(|h| h.zero_grads()),
            fusion: self.fusion.zero_grads(),
            head: self.head.zero_grads(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.to_flat().len()
    }

    /// Flattens every parameter in declared order: audio LSTM (layer 1 W, U,
    /// b, then layer 2), vision LSTM, fusion layer 1, fusion layer 2, head.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let push_lstm = |lstm: &Lstm2, out: &mut Vec<f64>| {
            for layer in [&lstm.layer1, &lstm.layer2] {
                out.extend(layer.w.iter());
                out.extend(layer.u.iter());
                out.extend(layer.b.iter());
            }
        };
        if let Some(head) = &self.audio_head {
            push_lstm(head, &mut out);
        }
        if let Some(head) = &self.vision_head {
            push_lstm(head, &mut out);
        }
        for affine in [&self.fusion.l1, &self.fusion.l2, &self.head] {
            out.extend(affine.w.iter());
            out.extend(affine.b.iter());
        }
        out
    }

    /// Writes back a flat parameter vector produced by [`Self::to_flat`].
    pub fn from_flat(&mut self, values: &[f64]) -> Result<()> {
        let mut cursor = 0usize;
        let take = |n: usize, cursor: &mut usize| -> Result<std::ops::Range<usize>> {
            let range = *cursor..*cursor + n;
            if range.end > values.len() {
                return Err(CoreError::InvalidArgument(format!(
                    "flat parameter vector too short: need {} values",
                    range.end
                )));
            }
            *cursor = range.end;
            Ok(range)
        };
        let read_lstm = |lstm: &mut Lstm2, cursor: &mut usize| -> Result<()> {
            for layer in [&mut lstm.layer1, &mut lstm.layer2] {
                for tensor in [&mut layer.w, &mut layer.u] {
                    let r = take(tensor.len(), cursor)?;
                    for (slot, &v) in tensor.iter_mut().zip(&values[r]) {
                        *slot = v;
                    }
                }
                let r = take(layer.b.len(), cursor)?;
                for (slot, &v) in layer.b.iter_mut().zip(&values[r]) {
                    *slot = v;
                }
            }
            Ok(())
        };
        if let Some(head) = &mut self.audio_head {
            read_lstm(head, &mut cursor)?;
        }
        if let Some(head) = &mut self.vision_head {
            read_lstm(head, &mut cursor)?;
        }
        for affine in [&mut self.fusion.l1, &mut self.fusion.l2, &mut self.head] {
            let r = take(affine.w.len(), &mut cursor)?;
            for (slot, &v) in affine.w.iter_mut().zip(&values[r]) {
                *slot = v;
            }
            let r = take(affine.b.len(), &mut cursor)?;
            for (slot, &v) in affine.b.iter_mut().zip(&values[r]) {
                *slot = v;
            }
        }
        if cursor != values.len() {
            return Err(CoreError::InvalidArgument(format!(
                "flat parameter vector has {} values, model needs {}",
                values.len(),
                cursor
            )));
        }
        Ok(())
    }
}

/// Flattens gradients in the same declared order as [`FusionModel::to_flat`].
pub fn grads_to_flat(grads: &ModelGrads) -> Vec<f64> {
    let mut out = Vec::new();
    let push_lstm = |g: &Lstm2Grads, out: &mut Vec<f64>| {
        for layer in [&g.layer1, &g.layer2] {
            out.extend(layer.w.iter());
            out.extend(layer.u.iter());
            out.extend(layer.b.iter());
        }
    };
    if let Some(g) = &grads.audio_head {
        push_lstm(g, &mut out);
    }
    if let Some(g) = &grads.vision_head {
        push_lstm(g, &mut out);
    }
    for affine in [&grads.fusion.l1, &grads.fusion.l2, &grads.head] {
        out.extend(affine.w.iter());
        out.extend(affine.b.iter());
    }
    out
}

/// Loss of one item given the raw head output. Returns the loss value and
/// the gradient w.r.t. the raw output.
fn item_loss(raw: &Array1<f64>, target: &Target, loss_kind: LossKind) -> Result<(f64, Array1<f64>)> {
    match (loss_kind, target) {
        (LossKind::Mse, Target::Emi(t)) => {
            let mut loss = 0.0;
            let mut d_raw = Array1::zeros(NUM_EMOTIONS);
            for k in 0..NUM_EMOTIONS {
                let p = sigmoid(raw[k]);
                let diff = p - t[k];
                loss += diff * diff / NUM_EMOTIONS as f64;
                d_raw[k] = 2.0 * diff / NUM_EMOTIONS as f64 * p * (1.0 - p);
            }
            Ok((loss, d_raw))
        }
        (LossKind::BceLogit, Target::Bah(y)) => {
            let z = raw[0];
            let y = *y as f64;
            let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            let mut d_raw = Array1::zeros(1);
            d_raw[0] = sigmoid(z) - y;
            Ok((loss, d_raw))
        }
        _ => Err(CoreError::InvalidArgument(
            "loss kind does not match target kind".into(),
        )),
    }
}

/// Sum loss over the batch plus exact gradients of that sum with respect to
/// every parameter. Evaluation order is fixed (batch order), so results are
/// bit-reproducible.
pub fn model_gradients(
    model: &FusionModel,
    batch: &[BatchItem],
    loss_kind: LossKind,
) -> Result<(f64, ModelGrads)> {
    let mut grads = model.zero_grads();
    let mut total_loss = 0.0;
    for item in batch {
        let (_, cache) = model.forward_cached(&item.inputs)?;
        let (loss, d_raw) = item_loss(&cache.raw, &item.target, loss_kind)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                sample_id: item.id.clone(),
            });
        }
        total_loss += loss;

        let d_fused = model.head.backward(&cache.head_in, &d_raw, &mut grads.head);
        let d_x = model.fusion.backward(&cache.fusion, &d_fused, &mut grads.fusion);

        if let (Some(head), Some(lstm_cache), Some(offset)) = (
            &model.audio_head,
            &cache.audio,
            cache.block_offsets.audio,
        ) {
            let d_vec = d_x.slice(ndarray::s![offset..offset + model.config.hidden]).to_owned();
            head.backward(lstm_cache, &d_vec, grads.audio_head.as_mut().unwrap());
        }
        if let (Some(head), Some(lstm_cache), Some(offset)) = (
            &model.vision_head,
            &cache.vision,
            cache.block_offsets.vision,
        ) {
            let d_vec = d_x.slice(ndarray::s![offset..offset + model.config.hidden]).to_owned();
            head.backward(lstm_cache, &d_vec, grads.vision_head.as_mut().unwrap());
        }
        // Text embeddings and presence flags carry no trainable parameters.
    }
    Ok((total_loss, grads))
}
