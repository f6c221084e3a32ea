//! Readers and writers for the raw pack files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::{DatasetManifest, WordToken};
use crate::error::{CoreError, Result};

/// Current pack schema version.
pub const FORMAT_VERSION: &str = "1";

/// Sidecar metadata for a `.f32` matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub modality: String,
    pub frame_rate_hz: f64,
}

/// Sidecar metadata for a `labels.u8` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsMeta {
    pub frames: usize,
    pub frame_rate_hz: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CoreError::io(path, e))
}

/// Writes a feature matrix as raw little-endian f32 plus its sidecar.
pub fn write_feature_matrix(
    matrix: &Array2<f32>,
    modality: &str,
    frame_rate_hz: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "feature matrix must be at least 1x1, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            context: format!("feature matrix for {}", path.display()),
        });
    }
    let mut payload = Vec::with_capacity(matrix.len() * 4);
    for v in matrix.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &payload)?;
    let meta = MatrixMeta {
        rows: matrix.nrows(),
        cols: matrix.ncols(),
        dtype: "f32le".into(),
        modality: modality.into(),
        frame_rate_hz,
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CoreError::Other(format!("serializing sidecar: {e}")))?;
    write_bytes(&sidecar_path(path), json.as_bytes())
}

/// Reads a feature matrix and its sidecar, verifying sizes.
pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<(Array2<f32>, MatrixMeta)> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| CoreError::io(&meta_path, e))?;
    let meta: MatrixMeta = serde_json::from_str(&meta_text).map_err(|e| CoreError::CorruptFile {
        path: meta_path.clone(),
        detail: format!("bad sidecar json: {e}"),
    })?;
    if meta.dtype != "f32le" {
        return Err(CoreError::CorruptFile {
            path: meta_path,
            detail: format!("unsupported dtype {:?}", meta.dtype),
        });
    }
    let payload = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let expected = meta.rows * meta.cols * 4;
    if payload.len() != expected {
        return Err(CoreError::CorruptFile {
            path: path.to_path_buf(),
            detail: format!(
                "payload is {} bytes but sidecar declares {}x{} f32 ({} bytes)",
                payload.len(),
                meta.rows,
                meta.cols,
                expected
            ),
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            context: format!("feature matrix {}", path.display()),
        });
    }
    let matrix = Array2::from_shape_vec((meta.rows, meta.cols), values).map_err(|e| {
        CoreError::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("shape error: {e}"),
        }
    })?;
    Ok((matrix, meta))
}

/// Writes a transcript as one `start_s<TAB>end_s<TAB>word` record per line.
pub fn write_transcript(words: &[WordToken], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for w in words {
        text.push_str(&format!("{}\t{}\t{}\n", w.start_s, w.end_s, w.word));
    }
    write_bytes(path.as_ref(), text.as_bytes())
}

/// Reads a transcript TSV.
pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<WordToken>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut words = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (start, end, word) = match (parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(e), Some(w)) => (s, e, w),
            _ => {
                return Err(CoreError::CorruptFile {
                    path: path.to_path_buf(),
                    detail: format!("transcript line {} is not start<TAB>end<TAB>word", ln + 1),
                })
            }
        };
        let start_s: f64 = start.parse().map_err(|e| CoreError::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("bad start_s on line {}: {e}", ln + 1),
        })?;
        let end_s: f64 = end.parse().map_err(|e| CoreError::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("bad end_s on line {}: {e}", ln + 1),
        })?;
        words.push(WordToken {
            word: word.to_string(),
            start_s,
            end_s,
        });
    }
    Ok(words)
}

/// Writes a BAH label track: one byte per frame plus sidecar.
pub fn write_bah_labels(labels: &[u8], frame_rate_hz: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, labels)?;
    let meta = LabelsMeta {
        frames: labels.len(),
        frame_rate_hz,
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CoreError::Other(format!("serializing labels sidecar: {e}")))?;
    write_bytes(&sidecar_path(path), json.as_bytes())
}

/// Reads a BAH label track and its sidecar.
pub fn read_bah_labels(path: impl AsRef<Path>) -> Result<(Vec<u8>, LabelsMeta)> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| CoreError::io(&meta_path, e))?;
    let meta: LabelsMeta = serde_json::from_str(&meta_text).map_err(|e| CoreError::CorruptFile {
        path: meta_path,
        detail: format!("bad labels sidecar: {e}"),
    })?;
    let labels = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    if labels.len() != meta.frames {
        return Err(CoreError::CorruptFile {
            path: path.to_path_buf(),
            detail: format!(
                "labels file has {} bytes but sidecar declares {} frames",
                labels.len(),
                meta.frames
            ),
        });
    }
    Ok((labels, meta))
}

/// Writes a manifest as pretty-printed JSON.
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| CoreError::Other(format!("serializing manifest: {e}")))?;
    write_bytes(path.as_ref(), json.as_bytes())
}

/// Reads a manifest.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CoreError::CorruptFile {
        path: path.to_path_buf(),
        detail: format!("bad manifest json: {e}"),
    })
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CoreError::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| CoreError::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.push(path.strip_prefix(base).unwrap().to_path_buf());
        }
    }
    Ok(())
}

/// SHA-256 digest over every file of a pack, in sorted relative-path order.
/// Equal packs (byte for byte) produce equal digests.
pub fn pack_digest(root: impl AsRef<Path>) -> Result<String> {
    let root = root.as_ref();
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        let full = root.join(&rel);
        let bytes = fs::read(&full).map_err(|e| CoreError::io(&full, e))?;
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_by_one_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.f32");
        let m = array![[0.0f32]];
        write_feature_matrix(&m, "audio", 25.0, &path).unwrap();
        let (back, meta) = read_feature_matrix(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta.rows, 1);
        assert_eq!(meta.cols, 1);
        assert_eq!(meta.dtype, "f32le");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.f32");
        let m = array![
            [1.5f32, -0.0],
            [f32::MIN_POSITIVE, 3.25e-12],
            [-7.75e33, 42.0]
        ];
        write_feature_matrix(&m, "vision", 6.0, &path).unwrap();
        let (back, _) = read_feature_matrix(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Byte-level oracle: the payload must be exactly the LE bytes.
        let bytes = std::fs::read(&path).unwrap();
        let mut expected = Vec::new();
        for v in m.iter() {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.f32");
        let m = array![[1.0f32, 2.0], [3.0, 4.0]];
        write_feature_matrix(&m, "audio", 25.0, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match read_feature_matrix(&path) {
            Err(CoreError::CorruptFile { .. }) => {}
            other => panic!("expected corrupt-file error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.f32");
        let m = array![[f32::INFINITY]];
        assert!(matches!(
            write_feature_matrix(&m, "audio", 25.0, &path),
            Err(CoreError::NonFinite { .. })
        ));
    }

    #[test]
    fn transcript_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.tsv");
        let words = vec![
            WordToken { word: "hello".into(), start_s: 0.25, end_s: 0.5 },
            WordToken { word: "there".into(), start_s: 0.75, end_s: 1.0 },
        ];
        write_transcript(&words, &path).unwrap();
        assert_eq!(read_transcript(&path).unwrap(), words);
    }

    #[test]
    fn labels_round_trip_and_size_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.u8");
        write_bah_labels(&[0, 1, 1, 0], 25.0, &path).unwrap();
        let (labels, meta) = read_bah_labels(&path).unwrap();
        assert_eq!(labels, vec![0, 1, 1, 0]);
        assert_eq!(meta.frames, 4);
        std::fs::write(&path, [0u8, 1]).unwrap();
        assert!(matches!(read_bah_labels(&path), Err(CoreError::CorruptFile { .. })));
    }
}
