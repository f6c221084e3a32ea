//! Uncertainty-weighted multi-task treatment of the modalities.
//!
//! Each configured modality gets its own unimodal fusion model; a learned
//! log-variance parameter `s` per modality scales that modality's loss as
//! `exp(-s) * L + s`, and the same parameters induce the convex weights
//! `w_i = exp(-s_i) / sum_j exp(-s_j)` used to fuse the unimodal predictions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Modality, TaskKind, NUM_EMOTIONS};
use crate::error::{CoreError, Result};
use crate::model::{
    init_parameters, read_param_blob, write_param_blob, FusionModel, ModelConfig, ModelInputs,
    TaskOutput,
};

/// Learned per-modality log-variance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskUncertainty {
    pub s: BTreeMap<Modality, f64>,
}

impl TaskUncertainty {
    pub fn uniform(modalities: &[Modality]) -> Self {
        TaskUncertainty {
            s: modalities.iter().map(|&m| (m, 0.0)).collect(),
        }
    }
}

/// Total uncertainty-weighted loss: `sum_i exp(-s_i) * L_i + s_i`.
pub fn mtl_loss(per_modality_losses: &BTreeMap<Modality, f64>, u: &TaskUncertainty) -> f64 {
    per_modality_losses
        .iter()
        .map(|(m, &loss)| {
            let s = u.s.get(m).copied().unwrap_or(0.0);
            (-s).exp() * loss + s
        })
        .sum()
}

/// Convex fusion weights `w_i = exp(-s_i) / sum_j exp(-s_j)`. Shifting every
/// `s` by a constant leaves the weights unchanged.
pub fn fusion_weights(u: &TaskUncertainty) -> BTreeMap<Modality, f64> {
    // Subtract the max exponent for stability.
    let max_neg_s = u
        .s
        .values()
        .map(|&s| -s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: BTreeMap<Modality, f64> = u
        .s
        .iter()
        .map(|(&m, &s)| (m, (-s - max_neg_s).exp()))
        .collect();
    let total: f64 = exps.values().sum();
    exps.into_iter().map(|(m, e)| (m, e / total)).collect()
}

/// Element-wise convex combination of per-modality predictions. EMI combines
/// the six intensities; BAH combines probabilities.
pub fn mtl_fused_prediction(
    predictions: &BTreeMap<Modality, Prediction>,
    weights: &BTreeMap<Modality, f64>,
) -> Result<Prediction> {
    if predictions.is_empty() {
        return Err(CoreError::InvalidArgument("no predictions to fuse".into()));
    }
    let mut iter = predictions.iter();
    let (&first_m, first) = iter.next().unwrap();
    match first {
        Prediction::Emi(_) => {
            let mut acc = [0.0; NUM_EMOTIONS];
            for (m, pred) in predictions {
                let w = *weights.get(m).ok_or_else(|| {
                    CoreError::InvalidArgument(format!("missing weight for {m}"))
                })?;
                match pred {
                    Prediction::Emi(vals) => {
                        for (slot, v) in acc.iter_mut().zip(vals) {
                            *slot += w * v;
                        }
                    }
                    Prediction::BahProb(_) => {
                        return Err(CoreError::ShapeMismatch {
                            context: "mtl_fused_prediction".into(),
                            expected: "emi predictions".into(),
                            found: format!("bah prediction for {m}"),
                        })
                    }
                }
            }
            Ok(Prediction::Emi(acc))
        }
        Prediction::BahProb(_) => {
            let mut acc = 0.0;
            for (m, pred) in predictions {
                let w = *weights.get(m).ok_or_else(|| {
                    CoreError::InvalidArgument(format!("missing weight for {m}"))
                })?;
                match pred {
                    Prediction::BahProb(p) => acc += w * p,
                    Prediction::Emi(_) => {
                        return Err(CoreError::ShapeMismatch {
                            context: "mtl_fused_prediction".into(),
                            expected: format!("bah predictions (like {first_m})"),
                            found: format!("emi prediction for {m}"),
                        })
                    }
                }
            }
            Ok(Prediction::BahProb(acc))
        }
    }
}

/// Output-space prediction shared by single and multi-task models: EMI
/// intensities, or a BAH probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Emi([f64; NUM_EMOTIONS]),
    BahProb(f64),
}

impl Prediction {
    pub fn from_task_output(out: TaskOutput) -> Prediction {
        match out {
            TaskOutput::Emi(vals) => Prediction::Emi(vals),
            TaskOutput::Bah(logit) => Prediction::BahProb(crate::model::sigmoid(logit)),
        }
    }
}

/// The multi-task model: one unimodal fusion model per modality plus the
/// shared uncertainty parameters.
#[derive(Debug, Clone)]
pub struct MtlModel {
    pub modalities: Vec<Modality>,
    pub models: Vec<FusionModel>,
    /// Log-variance per modality, aligned with `modalities`.
    pub s: Vec<f64>,
}

impl MtlModel {
    pub fn init(seed: u64, base_config: &ModelConfig, init_s: &BTreeMap<Modality, f64>) -> Result<MtlModel> {
        if base_config.modalities.len() < 2 {
            return Err(CoreError::InvalidArgument(
                "multi-task training needs at least 2 modalities".into(),
            ));
        }
        let mut models = Vec::new();
        for (k, &modality) in base_config.modalities.iter().enumerate() {
            let mut config = base_config.clone();
            config.modalities = vec![modality];
            models.push(init_parameters(seed.wrapping_add(k as u64 + 1), &config)?);
        }
        let s = base_config
            .modalities
            .iter()
            .map(|m| init_s.get(m).copied().unwrap_or(0.0))
            .collect();
        Ok(MtlModel {
            modalities: base_config.modalities.clone(),
            models,
            s,
        })
    }

    pub fn uncertainty(&self) -> TaskUncertainty {
        TaskUncertainty {
            s: self.modalities.iter().copied().zip(self.s.iter().copied()).collect(),
        }
    }

    pub fn weights(&self) -> BTreeMap<Modality, f64> {
        fusion_weights(&self.uncertainty())
    }

    /// Fused prediction: convex combination of the unimodal predictions.
    pub fn predict(&self, inputs: &ModelInputs) -> Result<Prediction> {
        let weights = self.weights();
        let mut predictions = BTreeMap::new();
        for (modality, model) in self.modalities.iter().zip(&self.models) {
            let out = model.predict(inputs)?;
            predictions.insert(*modality, Prediction::from_task_output(out));
        }
        mtl_fused_prediction(&predictions, &weights)
    }

    /// Flat parameters: each unimodal model in modality order, then `s`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for model in &self.models {
            out.extend(model.to_flat());
        }
        out.extend(&self.s);
        out
    }

    pub fn from_flat(&mut self, values: &[f64]) -> Result<()> {
        let mut cursor = 0;
        for model in &mut self.models {
            let n = model.param_count();
            model.from_flat(&values[cursor..cursor + n])?;
            cursor += n;
        }
        for slot in &mut self.s {
            *slot = values[cursor];
            cursor += 1;
        }
        if cursor != values.len() {
            return Err(CoreError::InvalidArgument(format!(
                "flat vector has {} values, mtl model needs {}",
                values.len(),
                cursor
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_param_blob(&self.to_flat(), path)?;
        let meta = MtlCheckpointMeta {
            format: "mtl-v1".into(),
            task: self.models[0].config.task,
            modalities: self.modalities.clone(),
            configs: self.models.iter().map(|m| m.config.clone()).collect(),
            seeds: self.models.iter().map(|m| m.seed).collect(),
            param_count: self.to_flat().len(),
        };
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| CoreError::Other(format!("serializing mtl meta: {e}")))?;
        let meta_file = path.with_extension("meta.json");
        std::fs::write(&meta_file, json).map_err(|e| CoreError::io(&meta_file, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MtlModel> {
        let path = path.as_ref();
        let meta_file = path.with_extension("meta.json");
        let text = std::fs::read_to_string(&meta_file).map_err(|e| CoreError::io(&meta_file, e))?;
        let meta: MtlCheckpointMeta =
            serde_json::from_str(&text).map_err(|e| CoreError::CorruptFile {
                path: meta_file.clone(),
                detail: format!("bad mtl meta: {e}"),
            })?;
        if meta.format != "mtl-v1" {
            return Err(CoreError::SchemaVersion {
                found: meta.format,
                expected: "mtl-v1".into(),
            });
        }
        let mut models = Vec::new();
        for (config, seed) in meta.configs.iter().zip(&meta.seeds) {
            models.push(init_parameters(*seed, config)?);
        }
        let mut model = MtlModel {
            modalities: meta.modalities,
            models,
            s: vec![0.0; meta.seeds.len()],
        };
        let values = read_param_blob(path)?;
        model.from_flat(&values)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MtlCheckpointMeta {
    format: String,
    task: TaskKind,
    modalities: Vec<Modality>,
    configs: Vec<ModelConfig>,
    seeds: Vec<u64>,
    param_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uncertainty(pairs: &[(Modality, f64)]) -> TaskUncertainty {
        TaskUncertainty {
            s: pairs.iter().copied().collect(),
        }
    }

    #[test]
    fn zero_s_reduces_to_plain_sum() {
        let u = uncertainty(&[(Modality::Audio, 0.0), (Modality::Text, 0.0)]);
        let losses: BTreeMap<Modality, f64> =
            [(Modality::Audio, 0.25), (Modality::Text, 1.5)].into_iter().collect();
        assert!((mtl_loss(&losses, &u) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn single_modality_closed_form() {
        let u = uncertainty(&[(Modality::Audio, std::f64::consts::LN_2)]);
        let losses: BTreeMap<Modality, f64> = [(Modality::Audio, 1.0)].into_iter().collect();
        let total = mtl_loss(&losses, &u);
        assert!((total - (0.5 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((total - 1.19315).abs() < 1e-5);
    }

    #[test]
    fn loss_is_stationary_in_s_when_loss_is_one() {
        // Central finite difference of s -> exp(-s)*1 + s at s=0.
        let eps = 1e-6;
        let f = |s: f64| (-s).exp() * 1.0 + s;
        let derivative = (f(eps) - f(-eps)) / (2.0 * eps);
        assert!(derivative.abs() < 1e-9);
    }

    #[test]
    fn equal_s_gives_uniform_weights() {
        let u = uncertainty(&[
            (Modality::Audio, 0.3),
            (Modality::Vision, 0.3),
            (Modality::Text, 0.3),
        ]);
        for (_, w) in fusion_weights(&u) {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_modality_weights_hand_value() {
        let u = uncertainty(&[(Modality::Audio, 0.0), (Modality::Text, std::f64::consts::LN_2)]);
        let w = fusion_weights(&u);
        assert!((w[&Modality::Audio] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[&Modality::Text] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weights_are_shift_invariant() {
        let base = uncertainty(&[(Modality::Audio, 0.1), (Modality::Vision, -0.7)]);
        let shifted = uncertainty(&[(Modality::Audio, 0.1 + 5.0), (Modality::Vision, -0.7 + 5.0)]);
        let a = fusion_weights(&base);
        let b = fusion_weights(&shifted);
        for (m, w) in a {
            assert!((w - b[&m]).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_prediction_examples() {
        let preds: BTreeMap<Modality, Prediction> = [
            (Modality::Audio, Prediction::BahProb(0.2)),
            (Modality::Text, Prediction::BahProb(0.8)),
        ]
        .into_iter()
        .collect();
        let weights: BTreeMap<Modality, f64> =
            [(Modality::Audio, 0.25), (Modality::Text, 0.75)].into_iter().collect();
        match mtl_fused_prediction(&preds, &weights).unwrap() {
            Prediction::BahProb(p) => assert!((p - 0.65).abs() < 1e-12),
            _ => panic!("wrong kind"),
        }

        let degenerate: BTreeMap<Modality, f64> =
            [(Modality::Audio, 1.0), (Modality::Text, 0.0)].into_iter().collect();
        match mtl_fused_prediction(&preds, &degenerate).unwrap() {
            Prediction::BahProb(p) => assert_eq!(p, 0.2),
            _ => panic!("wrong kind"),
        }

        let same: BTreeMap<Modality, Prediction> = [
            (Modality::Audio, Prediction::Emi([0.5; 6])),
            (Modality::Text, Prediction::Emi([0.5; 6])),
        ]
        .into_iter()
        .collect();
        let half: BTreeMap<Modality, f64> =
            [(Modality::Audio, 0.5), (Modality::Text, 0.5)].into_iter().collect();
        match mtl_fused_prediction(&same, &half).unwrap() {
            Prediction::Emi(vals) => {
                for v in vals {
                    assert!((v - 0.5).abs() < 1e-15);
                }
            }
            _ => panic!("wrong kind"),
        }
    }

    proptest! {
        #[test]
        fn weights_are_convex(
            s_audio in -10.0f64..10.0,
            s_vision in -10.0f64..10.0,
            s_text in -10.0f64..10.0,
        ) {
            let u = uncertainty(&[
                (Modality::Audio, s_audio),
                (Modality::Vision, s_vision),
                (Modality::Text, s_text),
            ]);
            let w = fusion_weights(&u);
            let total: f64 = w.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (_, v) in w {
                prop_assert!(v > 0.0);
            }
        }

        #[test]
        fn fused_lies_in_convex_hull(
            p_a in 0.0f64..1.0,
            p_b in 0.0f64..1.0,
            s_a in -3.0f64..3.0,
            s_b in -3.0f64..3.0,
        ) {
            let u = uncertainty(&[(Modality::Audio, s_a), (Modality::Text, s_b)]);
            let w = fusion_weights(&u);
            let preds: BTreeMap<Modality, Prediction> = [
                (Modality::Audio, Prediction::BahProb(p_a)),
                (Modality::Text, Prediction::BahProb(p_b)),
            ].into_iter().collect();
            match mtl_fused_prediction(&preds, &w).unwrap() {
                Prediction::BahProb(p) => {
                    prop_assert!(p >= p_a.min(p_b) - 1e-12);
                    prop_assert!(p <= p_a.max(p_b) + 1e-12);
                }
                _ => unreachable!(),
            }
        }
    }
}
