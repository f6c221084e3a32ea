//! Encoder adapter contracts plus deterministic stubs.
//!
//! Real encoders never run in-process: the pipeline consumes precomputed
//! feature tracks, and text is embedded through the [`TextEmbedder`]
//! contract. [`StubTextEmbedder`] is a deterministic hash-based stand-in that
//! keeps the rest of the pipeline fully testable. External encoders plug in
//! file-based via [`ExternalVectorAdapter`] (`adapter --in <window-file>
//! --out <vector.f32>`).

use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::datamodel::{Modality, ModalityTrack, Sample, VAD_DIM};
use crate::error::{CoreError, Result};

/// Maps a token sequence to a fixed-size vector. Implementations must be
/// deterministic, and must give the marker token a reserved embedding
/// distinct from ordinary word embeddings.
pub trait TextEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, tokens: &[String]) -> Vec<f64>;
}

/// Source of a precomputed feature track; the passthrough contract for
/// modalities whose encoders ran offline.
pub trait SequenceFeatureSource {
    fn modality(&self) -> Modality;
    fn dim(&self) -> usize;
    /// Returns the stored track unchanged.
    fn track<'a>(&self, sample: &'a Sample) -> Option<&'a ModalityTrack>;
}

/// Passthrough source reading straight from the sample.
#[derive(Debug, Clone, Copy)]
pub struct PassthroughSource {
    pub modality: Modality,
    pub dim: usize,
}

impl SequenceFeatureSource for PassthroughSource {
    fn modality(&self) -> Modality {
        self.modality
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn track<'a>(&self, sample: &'a Sample) -> Option<&'a ModalityTrack> {
        sample.track(self.modality)
    }
}

// Separate hash streams so the marker embedding can never collide with a
// word embedding.
const WORD_STREAM: u8 = 0;
const MARKER_STREAM: u8 = 1;

fn token_rng(seed: u64, stream_tag: u8, token: &str, position: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([stream_tag]);
    hasher.update((position as u64).to_le_bytes());
    hasher.update(token.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Deterministic hash-of-token bag embedding, position-sensitive, L2-norm 1
/// for any nonempty input. The empty sequence maps to the zero vector.
pub fn stub_text_embed(tokens: &[String], dim: usize, seed: u64, marker: &str) -> Vec<f64> {
    assert!(dim >= 1, "embedding dim must be >= 1");
    let mut acc = vec![0.0f64; dim];
    for (position, token) in tokens.iter().enumerate() {
        let stream_tag = if token == marker { MARKER_STREAM } else { WORD_STREAM };
        let mut rng = token_rng(seed, stream_tag, token, position);
        for slot in acc.iter_mut() {
            let v: f64 = rng.sample(rand_distr::StandardNormal);
            *slot += v;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in acc.iter_mut() {
            *v /= norm;
        }
    }
    acc
}

/// Stub embedder wrapping [`stub_text_embed`].
#[derive(Debug, Clone)]
pub struct StubTextEmbedder {
    pub dim: usize,
    pub seed: u64,
    pub marker_token: String,
}

impl StubTextEmbedder {
    pub fn new(dim: usize, seed: u64, marker_token: impl Into<String>) -> Self {
        StubTextEmbedder {
            dim,
            seed,
            marker_token: marker_token.into(),
        }
    }
}

impl TextEmbedder for StubTextEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Vec<f64> {
        stub_text_embed(tokens, self.dim, self.seed, &self.marker_token)
    }
}

/// Concatenates VAD channels onto every audio frame, resampling VAD to the
/// audio frame grid by nearest-timestamp lookup (exact ties resolve to the
/// later VAD frame). The output keeps the audio frame rate.
pub fn audio_with_vad(audio: &ModalityTrack, vad: &ModalityTrack) -> Result<ModalityTrack> {
    if vad.dim() != VAD_DIM {
        return Err(CoreError::ShapeMismatch {
            context: "audio_with_vad".into(),
            expected: format!("vad with {VAD_DIM} columns"),
            found: format!("{} columns", vad.dim()),
        });
    }
    let tolerance = 1.0 / audio.frame_rate_hz.min(vad.frame_rate_hz);
    if (audio.duration_s - vad.duration_s).abs() > tolerance {
        return Err(CoreError::InvalidArgument(format!(
            "audio covers {:.4}s but vad covers {:.4}s (tolerance {:.4}s)",
            audio.duration_s, vad.duration_s, tolerance
        )));
    }

    let frames = audio.frames();
    let mut features = Array2::zeros((frames, audio.dim() + VAD_DIM));
    for t in 0..frames {
        for d in 0..audio.dim() {
            features[[t, d]] = audio.features[[t, d]];
        }
        let time = audio.frame_time_s(t);
        let j = ((time * vad.frame_rate_hz).round() as usize).min(vad.frames().saturating_sub(1));
        for d in 0..VAD_DIM {
            features[[t, audio.dim() + d]] = vad.features[[j, d]];
        }
    }

    Ok(ModalityTrack {
        modality: Modality::Audio,
        features,
        frame_rate_hz: audio.frame_rate_hz,
        duration_s: audio.duration_s,
    })
}

/// Invokes an external encoder executable following the adapter convention
/// `adapter --in <input> --out <vector.f32>` and reads the emitted vector.
#[derive(Debug, Clone)]
pub struct ExternalVectorAdapter {
    pub program: PathBuf,
}

impl ExternalVectorAdapter {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ExternalVectorAdapter {
            program: program.into(),
        }
    }

    pub fn encode_file(&self, input: &Path, output: &Path) -> Result<Vec<f64>> {
        let status = Command::new(&self.program)
            .arg("--in")
            .arg(input)
            .arg("--out")
            .arg(output)
            .status()
            .map_err(|e| CoreError::io(&self.program, e))?;
        if !status.success() {
            return Err(CoreError::Other(format!(
                "adapter {} exited with {status}",
                self.program.display()
            )));
        }
        let (matrix, _meta) = crate::featurestore::read_feature_matrix(output)?;
        Ok(matrix.iter().map(|&v| v as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tokens(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn stub_embed_is_deterministic() {
        let t = tokens(&["hello", "there"]);
        assert_eq!(stub_text_embed(&t, 16, 7, "[NOW]"), stub_text_embed(&t, 16, 7, "[NOW]"));
    }

    #[test]
    fn stub_embed_is_unit_norm() {
        for words in [vec!["a"], vec!["a", "b", "c"], vec!["[NOW]"]] {
            let v = stub_text_embed(&tokens(&words), 24, 3, "[NOW]");
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "norm {norm} for {words:?}");
        }
        assert!(stub_text_embed(&[], 8, 3, "[NOW]").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stub_embed_is_position_sensitive() {
        let a = stub_text_embed(&tokens(&["alpha", "beta"]), 16, 5, "[NOW]");
        let b = stub_text_embed(&tokens(&["beta", "alpha"]), 16, 5, "[NOW]");
        assert_ne!(a, b);
    }

    #[test]
    fn marker_embedding_is_reserved() {
        // The marker draws from a reserved stream: a model fed the same
        // spelling as an ordinary word (different marker config) sees a
        // different vector.
        let with_marker = stub_text_embed(&tokens(&["[NOW]"]), 16, 5, "[NOW]");
        let as_word = stub_text_embed(&tokens(&["[NOW]"]), 16, 5, "[OTHER]");
        assert_ne!(with_marker, as_word);
    }

    #[test]
    fn marker_position_matters() {
        let a = stub_text_embed(&tokens(&["[NOW]", "word"]), 16, 5, "[NOW]");
        let b = stub_text_embed(&tokens(&["word", "[NOW]"]), 16, 5, "[NOW]");
        assert_ne!(a, b);
    }

    fn track(modality: Modality, features: Array2<f32>, rate: f64, duration: f64) -> ModalityTrack {
        ModalityTrack {
            modality,
            features,
            frame_rate_hz: rate,
            duration_s: duration,
        }
    }

    #[test]
    fn concat_shapes() {
        let audio = track(Modality::Audio, Array2::ones((10, 4)), 5.0, 2.0);
        let vad = track(Modality::Vad, Array2::ones((10, 3)), 5.0, 2.0);
        let out = audio_with_vad(&audio, &vad).unwrap();
        assert_eq!(out.features.shape(), &[10, 7]);
        assert_eq!(out.frame_rate_hz, 5.0);
    }

    #[test]
    fn half_rate_vad_duplicates_rows() {
        let audio = track(Modality::Audio, Array2::zeros((8, 2)), 4.0, 2.0);
        let mut vad_features = Array2::zeros((4, 3));
        for i in 0..4 {
            for d in 0..3 {
                vad_features[[i, d]] = i as f32;
            }
        }
        let vad = track(Modality::Vad, vad_features, 2.0, 2.0);
        let out = audio_with_vad(&audio, &vad).unwrap();
        // Oracle: j = argmin_j |t_audio - t_vad_j|, ties to the later frame.
        for t in 0..8 {
            let time = t as f64 / 4.0;
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for j in 0..4 {
                let dist = (time - j as f64 / 2.0).abs();
                if dist < best_dist || (dist == best_dist && j > best) {
                    best = j;
                    best_dist = dist;
                }
            }
            assert_eq!(out.features[[t, 2]], best as f32, "frame {t}");
        }
    }

    #[test]
    fn zero_vad_leaves_audio_intact() {
        let mut audio_features = Array2::zeros((6, 4));
        for (i, v) in audio_features.iter_mut().enumerate() {
            *v = i as f32;
        }
        let audio = track(Modality::Audio, audio_features.clone(), 3.0, 2.0);
        let vad = track(Modality::Vad, Array2::zeros((6, 3)), 3.0, 2.0);
        let out = audio_with_vad(&audio, &vad).unwrap();
        for t in 0..6 {
            for d in 0..4 {
                assert_eq!(out.features[[t, d]], audio_features[[t, d]]);
            }
            for d in 4..7 {
                assert_eq!(out.features[[t, d]], 0.0);
            }
        }
    }

    #[test]
    fn duration_mismatch_is_rejected() {
        let audio = track(Modality::Audio, Array2::zeros((10, 2)), 5.0, 2.0);
        let vad = track(Modality::Vad, Array2::zeros((20, 3)), 5.0, 4.0);
        assert!(audio_with_vad(&audio, &vad).is_err());
    }

    #[test]
    fn external_adapter_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("adapter.sh");
        // A fake adapter: reads a text file of floats, writes them as a 1xN
        // matrix through this crate's own format (via a tiny shell+python-free
        // path: we just prewrite the output and let the script copy it).
        let out_template = dir.path().join("vector.f32");
        let matrix = array![[1.5f32, -2.0, 0.25]];
        crate::featurestore::write_feature_matrix(&matrix, "text", 1.0, &out_template).unwrap();
        std::fs::write(
            &script,
            format!(
                "#!/bin/sh\ncp {} \"$4\"\ncp {} \"$4.sidecar\"\nmv \"$4.sidecar\" \"${{4%.f32}}.meta.json\"\n",
                out_template.display(),
                out_template.with_extension("meta.json").display()
            ),
        )
        .unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

        let input = dir.path().join("window.txt");
        std::fs::write(&input, "ignored").unwrap();
        let output = dir.path().join("out.f32");
        let adapter = ExternalVectorAdapter::new(&script);
        let vec = adapter.encode_file(&input, &output).unwrap();
        assert_eq!(vec, vec![1.5, -2.0, 0.25]);
    }
}
