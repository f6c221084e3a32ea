//! Domain types shared by the whole pipeline, plus structural validation.
//!
//! A [`Sample`] carries per-modality feature tracks (audio, vision, VAD as
//! timestamped matrices; text as word tokens with timings) and one label:
//! six emotion intensities for EMI, or a frame-level binary track for BAH.
//! Everything here is immutable after construction and safe to share across
//! threads.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Fixed emotion order used by every 6-vector in the pipeline (alphabetical).
pub const EMOTIONS: [&str; 6] = [
    "Admiration",
    "Amusement",
    "Determination",
    "Empathic Pain",
    "Excitement",
    "Joy",
];

/// Number of EMI emotion channels.
pub const NUM_EMOTIONS: usize = 6;

/// VAD tracks always carry valence, arousal, dominance.
pub const VAD_DIM: usize = 3;

/// Input channel of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Text,
    Vision,
    Vad,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Text => "text",
            Modality::Vision => "vision",
            Modality::Vad => "vad",
        }
    }

    pub fn from_name(name: &str) -> Option<Modality> {
        match name {
            "audio" => Some(Modality::Audio),
            "text" => Some(Modality::Text),
            "vision" => Some(Modality::Vision),
            "vad" => Some(Modality::Vad),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Which task a sample (or dataset) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Emotional mimicry intensity: per-sample regression of six
    /// intensities in [0, 1].
    Emi,
    /// Behavioural ambivalence/hesitancy: per-frame binary classification.
    Bah,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Emi => "emi",
            TaskKind::Bah => "bah",
        })
    }
}

/// Timestamped feature matrix (frames x dims) for one modality of one sample.
///
/// Frame `i` is anchored at time `i / frame_rate_hz`. Feature payloads are
/// stored as `f32`, mirroring the on-disk format; model arithmetic lifts rows
/// to `f64` at the consumption boundary.
#[derive(Debug, Clone)]
pub struct ModalityTrack {
    pub modality: Modality,
    pub features: Array2<f32>,
    pub frame_rate_hz: f64,
    pub duration_s: f64,
}

impl ModalityTrack {
    pub fn frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Seconds covered by one frame.
    pub fn frame_period_s(&self) -> f64 {
        1.0 / self.frame_rate_hz
    }

    /// Anchor timestamp of frame `i`.
    pub fn frame_time_s(&self, i: usize) -> f64 {
        i as f64 / self.frame_rate_hz
    }
}

/// One transcript word with its span in the audio timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl WordToken {
    pub fn midpoint_s(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }
}

/// Six emotion intensities in [0, 1], ordered as [`EMOTIONS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmiLabel {
    pub intensities: [f64; NUM_EMOTIONS],
}

/// Frame-level binary labels (0 = absent, 1 = present) at a declared rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BahLabelTrack {
    pub labels: Vec<u8>,
    pub frame_rate_hz: f64,
}

impl BahLabelTrack {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn frame_time_s(&self, i: usize) -> f64 {
        i as f64 / self.frame_rate_hz
    }
}

/// A sample's label, matching its task.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleLabel {
    Emi(EmiLabel),
    Bah(BahLabelTrack),
}

/// A fully loaded sample: payloads in memory, label attached.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub task: TaskKind,
    pub duration_s: f64,
    pub audio: Option<ModalityTrack>,
    pub vision: Option<ModalityTrack>,
    pub vad: Option<ModalityTrack>,
    pub words: Option<Vec<WordToken>>,
    pub label: SampleLabel,
}

impl Sample {
    pub fn track(&self, modality: Modality) -> Option<&ModalityTrack> {
        match modality {
            Modality::Audio => self.audio.as_ref(),
            Modality::Vision => self.vision.as_ref(),
            Modality::Vad => self.vad.as_ref(),
            Modality::Text => None,
        }
    }

    fn numeric_tracks(&self) -> impl Iterator<Item = &ModalityTrack> {
        [self.audio.as_ref(), self.vision.as_ref(), self.vad.as_ref()]
            .into_iter()
            .flatten()
    }
}

/// Label descriptor as stored in the manifest: EMI labels are embedded,
/// BAH labels reference a per-sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LabelDesc {
    Emi { intensities: [f64; NUM_EMOTIONS] },
    Bah { path: String },
}

/// Manifest entry for one sample: paths, not payloads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleDesc {
    pub id: String,
    pub split: Split,
    pub duration_s: f64,
    /// Modality name -> pack-relative path of the `.f32` matrix file.
    pub tracks: BTreeMap<String, String>,
    /// Pack-relative path of the transcript TSV, when the sample has text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub label: LabelDesc,
}

/// Index of a feature pack: sample descriptors, splits, and declared dims.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub task: TaskKind,
    /// Modality name -> feature dimensionality for numeric modalities.
    pub feature_dims: BTreeMap<String, usize>,
    pub samples: Vec<SampleDesc>,
}

/// One structural-invariant violation found by [`validate_sample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Field the violation is about, e.g. `"intensities"` or `"audio"`.
    pub field: String,
    /// Short rule identifier, e.g. `"intensities range"`.
    pub rule: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.field, self.rule, self.message)
    }
}

fn check_track(sample: &Sample, track: &ModalityTrack, out: &mut Vec<Violation>) {
    let field = track.modality.name();
    if track.frames() == 0 {
        out.push(Violation::new(field, "frames", "track has zero frames"));
        return;
    }
    if !(track.frame_rate_hz > 0.0 && track.frame_rate_hz.is_finite()) {
        out.push(Violation::new(
            field,
            "frame rate",
            format!("frame_rate_hz must be positive, got {}", track.frame_rate_hz),
        ));
        return;
    }
    if track.features.iter().any(|v| !v.is_finite()) {
        out.push(Violation::new(field, "finite features", "track contains non-finite values"));
    }
    if track.modality == Modality::Vad && track.dim() != VAD_DIM {
        out.push(Violation::new(
            field,
            "vad dim",
            format!("vad track must have {} columns, got {}", VAD_DIM, track.dim()),
        ));
    }
    let implied = track.frames() as f64 / track.frame_rate_hz;
    if (implied - track.duration_s).abs() > track.frame_period_s() {
        out.push(Violation::new(
            field,
            "duration consistency",
            format!(
                "frames/rate = {:.4}s but duration_s = {:.4}s (tolerance one frame period)",
                implied, track.duration_s
            ),
        ));
    }
    // Track duration must also agree with the sample's declared duration.
    if (track.duration_s - sample.duration_s).abs() > track.frame_period_s() {
        out.push(Violation::new(
            field,
            "duration agreement",
            format!(
                "track duration {:.4}s differs from sample duration {:.4}s by more than one frame period",
                track.duration_s, sample.duration_s
            ),
        ));
    }
}

/// Checks every structural invariant of a loaded sample.
///
/// Returns an empty list iff the sample is well-formed; each violation names
/// the offending field and the rule it breaks. Pure: equal inputs produce
/// equal outputs.
pub fn validate_sample(sample: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();

    if sample.id.is_empty() {
        out.push(Violation::new("id", "nonempty", "sample id is empty"));
    }
    if !(sample.duration_s > 0.0 && sample.duration_s.is_finite()) {
        out.push(Violation::new(
            "duration_s",
            "positive",
            format!("duration_s must be positive, got {}", sample.duration_s),
        ));
    }

    for track in sample.numeric_tracks() {
        check_track(sample, track, &mut out);
    }

    // Pairwise duration agreement, tolerance = one frame period of the
    // lower-rate track of each pair.
    let tracks: Vec<&ModalityTrack> = sample.numeric_tracks().collect();
    for i in 0..tracks.len() {
        for j in (i + 1)..tracks.len() {
            let (a, b) = (tracks[i], tracks[j]);
            let tol = 1.0 / a.frame_rate_hz.min(b.frame_rate_hz);
            if (a.duration_s - b.duration_s).abs() > tol {
                out.push(Violation::new(
                    format!("{}/{}", a.modality, b.modality),
                    "duration agreement",
                    format!(
                        "{} duration {:.4}s and {} duration {:.4}s differ by more than one frame period of the lower-rate track",
                        a.modality, a.duration_s, b.modality, b.duration_s
                    ),
                ));
            }
        }
    }

    if let Some(words) = &sample.words {
        for (i, w) in words.iter().enumerate() {
            if w.start_s < 0.0 || w.end_s < w.start_s {
                out.push(Violation::new(
                    "words",
                    "span",
                    format!("token {} ({:?}) has invalid span [{}, {}]", i, w.word, w.start_s, w.end_s),
                ));
            }
            if w.end_s > sample.duration_s + 1e-9 {
                out.push(Violation::new(
                    "words",
                    "within duration",
                    format!("token {} ({:?}) ends at {}s, beyond sample duration {}s", i, w.word, w.end_s, sample.duration_s),
                ));
            }
        }
        if words.windows(2).any(|p| p[1].start_s < p[0].start_s) {
            out.push(Violation::new("words", "sorted", "tokens are not sorted by start_s"));
        }
    }

    match (&sample.label, sample.task) {
        (SampleLabel::Emi(label), TaskKind::Emi) => {
            for (e, &v) in label.intensities.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    out.push(Violation::new(
                        "intensities",
                        "intensities range",
                        format!("{} intensity {} outside [0, 1]", EMOTIONS[e], v),
                    ));
                }
            }
        }
        (SampleLabel::Bah(track), TaskKind::Bah) => {
            if track.frames() == 0 {
                out.push(Violation::new("labels", "frames", "label track has zero frames"));
            }
            if !(track.frame_rate_hz > 0.0 && track.frame_rate_hz.is_finite()) {
                out.push(Violation::new(
                    "labels",
                    "frame rate",
                    format!("label frame_rate_hz must be positive, got {}", track.frame_rate_hz),
                ));
            } else {
                let implied = track.frames() as f64 / track.frame_rate_hz;
                if (implied - sample.duration_s).abs() > 1.0 / track.frame_rate_hz {
                    out.push(Violation::new(
                        "labels",
                        "duration agreement",
                        format!(
                            "label track covers {:.4}s but sample duration is {:.4}s",
                            implied, sample.duration_s
                        ),
                    ));
                }
            }
            if track.labels.iter().any(|&v| v > 1) {
                out.push(Violation::new("labels", "binary", "label values must be 0 or 1"));
            }
        }
        (label, task) => {
            let kind = match label {
                SampleLabel::Emi(_) => "emi",
                SampleLabel::Bah(_) => "bah",
            };
            out.push(Violation::new(
                "label",
                "task match",
                format!("sample task is {} but label kind is {}", task, kind),
            ));
        }
    }

    out
}

/// Per-split sample count and total duration in hours.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SplitStat {
    pub count: usize,
    pub hours: f64,
}

/// Counts and hours for each split of a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SplitStatistics {
    pub train: SplitStat,
    pub val: SplitStat,
    pub test: SplitStat,
}

impl SplitStatistics {
    pub fn get(&self, split: Split) -> SplitStat {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// Tallies sample counts and hours (sum of `duration_s` / 3600) per split.
pub fn split_statistics(manifest: &DatasetManifest) -> SplitStatistics {
    let mut stats = SplitStatistics::default();
    for desc in &manifest.samples {
        let slot = match desc.split {
            Split::Train => &mut stats.train,
            Split::Val => &mut stats.val,
            Split::Test => &mut stats.test,
        };
        slot.count += 1;
        slot.hours += desc.duration_s / 3600.0;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn track(modality: Modality, frames: usize, dim: usize, rate: f64, duration: f64) -> ModalityTrack {
        ModalityTrack {
            modality,
            features: Array2::zeros((frames, dim)),
            frame_rate_hz: rate,
            duration_s: duration,
        }
    }

    fn emi_sample() -> Sample {
        Sample {
            id: "s0".into(),
            split: Split::Train,
            task: TaskKind::Emi,
            duration_s: 2.0,
            audio: Some(track(Modality::Audio, 50, 4, 25.0, 2.0)),
            vision: Some(track(Modality::Vision, 12, 3, 6.0, 2.0)),
            vad: Some(track(Modality::Vad, 10, 3, 5.0, 2.0)),
            words: Some(vec![
                WordToken { word: "a".into(), start_s: 0.1, end_s: 0.4 },
                WordToken { word: "b".into(), start_s: 0.8, end_s: 1.1 },
            ]),
            label: SampleLabel::Emi(EmiLabel { intensities: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] }),
        }
    }

    #[test]
    fn well_formed_sample_has_no_violations() {
        assert!(validate_sample(&emi_sample()).is_empty());
    }

    #[test]
    fn out_of_range_intensity_names_the_rule() {
        let mut s = emi_sample();
        if let SampleLabel::Emi(l) = &mut s.label {
            l.intensities[2] = 1.3;
        }
        let v = validate_sample(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "intensities range");
        assert_eq!(v[0].field, "intensities");
    }

    #[test]
    fn duration_disagreement_between_tracks_is_flagged() {
        // Audio shifted by 3 frame periods of the lower-rate (vision) track.
        let mut s = emi_sample();
        s.task = TaskKind::Bah;
        s.label = SampleLabel::Bah(BahLabelTrack {
            labels: vec![0, 1, 0, 1],
            frame_rate_hz: 2.0,
        });
        let shift = 3.0 / 6.0;
        s.audio = Some(track(Modality::Audio, ((2.0 + shift) * 25.0) as usize, 4, 25.0, 2.0 + shift));
        s.vad = None;
        let v = validate_sample(&s);
        let agree: Vec<_> = v.iter().filter(|v| v.rule == "duration agreement").collect();
        assert!(!agree.is_empty(), "expected a duration-agreement violation, got {:?}", v);
    }

    #[test]
    fn non_finite_feature_is_flagged() {
        let mut s = emi_sample();
        s.audio.as_mut().unwrap().features[[0, 0]] = f32::NAN;
        let v = validate_sample(&s);
        assert!(v.iter().any(|v| v.rule == "finite features"));
    }

    #[test]
    fn unsorted_words_are_flagged() {
        let mut s = emi_sample();
        s.words.as_mut().unwrap().reverse();
        let v = validate_sample(&s);
        assert!(v.iter().any(|v| v.rule == "sorted"));
    }

    #[test]
    fn validate_is_pure() {
        let s = emi_sample();
        assert_eq!(validate_sample(&s), validate_sample(&s));
    }

    #[test]
    fn split_statistics_empty_manifest() {
        let m = DatasetManifest {
            version: "1".into(),
            task: TaskKind::Emi,
            feature_dims: BTreeMap::new(),
            samples: vec![],
        };
        let stats = split_statistics(&m);
        assert_eq!(stats.train.count, 0);
        assert_eq!(stats.val.count, 0);
        assert_eq!(stats.test.count, 0);
        assert_eq!(stats.train.hours, 0.0);
    }

    #[test]
    fn split_statistics_ten_two_second_samples() {
        let samples: Vec<SampleDesc> = (0..10)
            .map(|i| SampleDesc {
                id: format!("s{i}"),
                split: Split::Train,
                duration_s: 2.0,
                tracks: BTreeMap::new(),
                transcript: None,
                label: LabelDesc::Emi { intensities: [0.0; 6] },
            })
            .collect();
        let m = DatasetManifest {
            version: "1".into(),
            task: TaskKind::Emi,
            feature_dims: BTreeMap::new(),
            samples,
        };
        let stats = split_statistics(&m);
        assert_eq!(stats.train.count, 10);
        assert!((stats.train.hours - 10.0 * 2.0 / 3600.0).abs() < 1e-9);
        assert!((stats.train.hours - 0.00556).abs() < 1e-5);
    }

    #[test]
    fn split_statistics_echoes_counts() {
        let mut samples = Vec::new();
        let mut push = |split, n: usize| {
            for i in 0..n {
                samples.push(SampleDesc {
                    id: format!("{split}-{i}"),
                    split,
                    duration_s: 6.7,
                    tracks: BTreeMap::new(),
                    transcript: None,
                    label: LabelDesc::Emi { intensities: [0.0; 6] },
                });
            }
        };
        push(Split::Train, 8072);
        push(Split::Val, 4588);
        push(Split::Test, 4582);
        let m = DatasetManifest {
            version: "1".into(),
            task: TaskKind::Emi,
            feature_dims: BTreeMap::new(),
            samples,
        };
        let stats = split_statistics(&m);
        assert_eq!(stats.train.count, 8072);
        assert_eq!(stats.val.count, 4588);
        assert_eq!(stats.test.count, 4582);
        // 8072 samples averaging ~6.7s is on the order of 15 hours.
        assert!((stats.train.hours - 8072.0 * 6.7 / 3600.0).abs() < 1e-9);
    }
}
