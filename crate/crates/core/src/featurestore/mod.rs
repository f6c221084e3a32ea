//! On-disk feature-pack format and the deterministic synthetic generator.
//!
//! Pack layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<sample_id>/<modality>.f32        raw little-endian f32, row-major
//! <root>/<sample_id>/<modality>.meta.json  {rows, cols, dtype, modality, frame_rate_hz}
//! <root>/<sample_id>/transcript.tsv        start_s<TAB>end_s<TAB>word
//! <root>/<sample_id>/labels.u8             one byte per frame (BAH only)
//! <root>/<sample_id>/labels.meta.json      {frames, frame_rate_hz}
//! ```
//!
//! EMI labels live inside the manifest. All multi-byte numbers are
//! little-endian; round-trips are bit-exact for every finite `f32`.

mod format;
pub mod synth;

pub use format::{
    pack_digest, read_bah_labels, read_feature_matrix, read_manifest, read_transcript,
    write_bah_labels, write_feature_matrix, write_manifest, write_transcript, LabelsMeta,
    MatrixMeta, FORMAT_VERSION,
};
pub use synth::{generate_synthetic, SyntheticSpec};

use std::path::{Path, PathBuf};

use crate::datamodel::{
    validate_sample, BahLabelTrack, DatasetManifest, EmiLabel, LabelDesc, Modality, ModalityTrack,
    Sample, SampleDesc, SampleLabel, Split, TaskKind,
};
use crate::error::{CoreError, Result};

/// Handle over a pack on disk. The manifest is resident; track payloads are
/// read lazily per sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

/// Opens a pack by its manifest path (or pack root containing
/// `manifest.json`), verifying version, id uniqueness, and that every
/// referenced file resolves.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (root, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join("manifest.json"))
    } else {
        (
            path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
            path.to_path_buf(),
        )
    };
    let manifest = read_manifest(&manifest_path)?;
    if manifest.version != FORMAT_VERSION {
        return Err(CoreError::SchemaVersion {
            found: manifest.version.clone(),
            expected: FORMAT_VERSION.to_string(),
        });
    }

    let mut seen = std::collections::BTreeSet::new();
    for desc in &manifest.samples {
        if !seen.insert(desc.id.as_str()) {
            return Err(CoreError::InvalidSample {
                id: desc.id.clone(),
                summary: "duplicate sample id in manifest".into(),
            });
        }
        for rel in desc
            .tracks
            .values()
            .chain(desc.transcript.iter())
            .chain(match &desc.label {
                LabelDesc::Bah { path } => Some(path),
                LabelDesc::Emi { .. } => None,
            })
        {
            let full = root.join(rel);
            if !full.is_file() {
                return Err(CoreError::InvalidSample {
                    id: desc.id.clone(),
                    summary: format!("referenced path {} does not resolve", full.display()),
                });
            }
        }
    }

    Ok(Dataset { root, manifest })
}

impl Dataset {
    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn task(&self) -> TaskKind {
        self.manifest.task
    }

    /// Loads one sample's payloads from disk.
    pub fn load_sample(&self, desc: &SampleDesc) -> Result<Sample> {
        let mut audio = None;
        let mut vision = None;
        let mut vad = None;
        for (name, rel) in &desc.tracks {
            let modality = Modality::from_name(name)
                .ok_or_else(|| CoreError::UnknownModality(name.clone()))?;
            let path = self.root.join(rel);
            let (features, meta) = read_feature_matrix(&path)?;
            let track = ModalityTrack {
                modality,
                features,
                frame_rate_hz: meta.frame_rate_hz,
                duration_s: desc.duration_s,
            };
            match modality {
                Modality::Audio => audio = Some(track),
                Modality::Vision => vision = Some(track),
                Modality::Vad => vad = Some(track),
                Modality::Text => {
                    return Err(CoreError::CorruptFile {
                        path,
                        detail: "text modality must use a transcript, not a matrix".into(),
                    })
                }
            }
        }

        let words = match &desc.transcript {
            Some(rel) => Some(read_transcript(self.root.join(rel))?),
            None => None,
        };

        let label = match &desc.label {
            LabelDesc::Emi { intensities } => SampleLabel::Emi(EmiLabel {
                intensities: *intensities,
            }),
            LabelDesc::Bah { path } => {
                let (labels, meta) = read_bah_labels(self.root.join(path))?;
                SampleLabel::Bah(BahLabelTrack {
                    labels,
                    frame_rate_hz: meta.frame_rate_hz,
                })
            }
        };

        Ok(Sample {
            id: desc.id.clone(),
            split: desc.split,
            task: self.manifest.task,
            duration_s: desc.duration_s,
            audio,
            vision,
            vad,
            words,
            label,
        })
    }

    /// Iterates every sample, validating each one. Invalid samples surface
    /// as errors rather than being dropped.
    pub fn iter_samples(&self) -> impl Iterator<Item = Result<Sample>> + '_ {
        self.manifest.samples.iter().map(move |desc| {
            let sample = self.load_sample(desc)?;
            let violations = validate_sample(&sample);
            if violations.is_empty() {
                Ok(sample)
            } else {
                Err(CoreError::InvalidSample {
                    id: desc.id.clone(),
                    summary: violations
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                })
            }
        })
    }

    /// Loads and validates every sample of one split.
    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.manifest
            .samples
            .iter()
            .filter(|d| d.split == split)
            .map(|desc| {
                let sample = self.load_sample(desc)?;
                let violations = validate_sample(&sample);
                if violations.is_empty() {
                    Ok(sample)
                } else {
                    Err(CoreError::InvalidSample {
                        id: desc.id.clone(),
                        summary: violations
                            .iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join("; "),
                    })
                }
            })
            .collect()
    }
}
