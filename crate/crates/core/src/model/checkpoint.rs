//! Checkpoint format: one raw `.f32` parameter blob in declared order plus a
//! JSON sidecar with dims, seed, task, and a config hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::model::{init_parameters, FusionModel, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub task: crate::datamodel::TaskKind,
    pub seed: u64,
    pub config: ModelConfig,
    pub param_count: usize,
    pub config_hash: String,
}

/// SHA-256 hex of the canonical JSON form of a config.
pub fn config_hash(config: &ModelConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a flat f64 parameter vector as little-endian f32.
pub fn write_param_blob(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}

/// Reads a little-endian f32 blob back as f64.
pub fn read_param_blob(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(CoreError::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("blob length {} is not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

fn meta_path(blob_path: &Path) -> std::path::PathBuf {
    blob_path.with_extension("meta.json")
}

/// Saves a model as `<path>` (the `.f32` blob) plus `<path>.meta.json`.
pub fn save_model(model: &FusionModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let flat = model.to_flat();
    write_param_blob(&flat, path)?;
    let meta = CheckpointMeta {
        format: "fusion-v1".into(),
        task: model.config.task,
        seed: model.seed,
        config: model.config.clone(),
        param_count: flat.len(),
        config_hash: config_hash(&model.config),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CoreError::Other(format!("serializing checkpoint meta: {e}")))?;
    fs::write(meta_path(path), json).map_err(|e| CoreError::io(meta_path(path), e))
}

/// Loads a model checkpoint written by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<FusionModel> {
    let path = path.as_ref();
    let meta_file = meta_path(path);
    let text = fs::read_to_string(&meta_file).map_err(|e| CoreError::io(&meta_file, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| CoreError::CorruptFile {
        path: meta_file.clone(),
        detail: format!("bad checkpoint meta: {e}"),
    })?;
    if meta.format != "fusion-v1" {
        return Err(CoreError::SchemaVersion {
            found: meta.format,
            expected: "fusion-v1".into(),
        });
    }
    let values = read_param_blob(path)?;
    if values.len() != meta.param_count {
        return Err(CoreError::CorruptFile {
            path: path.to_path_buf(),
            detail: format!(
                "blob has {} parameters, meta declares {}",
                values.len(),
                meta.param_count
            ),
        });
    }
    let mut model = init_parameters(meta.seed, &meta.config)?;
    model.from_flat(&values)?;
    Ok(model)
}
