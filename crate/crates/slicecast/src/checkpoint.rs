//! Model checkpoints: a JSON manifest describing the parameter registry and
//! a blob of little-endian f64 values in registry order.
//!
//! Loading rebuilds the model from the stored config and rejects the blob
//! unless every name and shape matches the freshly built registry.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slicecast_core::models::{Model, ModelConfig, ModelKind};

use crate::error::{Error, Result};
use crate::formats::{read_json, write_json, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in scalars.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub kind: ModelKind,
    pub model_config: ModelConfig,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub blob_sha256: String,
    pub scalars: usize,
    pub params: Vec<ParamRecord>,
}

fn blob_path(manifest: &Path, blob: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new("")).join(blob)
}

/// Writes `<dir>/<kind>.json` and `<dir>/<kind>.bin`; returns the manifest path.
pub fn save(dir: &Path, model: &Model, config_hash: &str) -> Result<PathBuf> {
    let kind = model.kind();
    let values = model.params().flatten();
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in &values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut offset = 0;
    let params = model
        .params()
        .entries()
        .iter()
        .map(|e| {
            let rec = ParamRecord {
                name: e.name.clone(),
                shape: e.tensor.shape().to_vec(),
                offset,
            };
            offset += e.tensor.numel();
            rec
        })
        .collect();
    let blob = format!("{}.bin", kind.tag());
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        kind,
        model_config: model.config().clone(),
        blob: blob.clone(),
        blob_sha256: hex::encode(Sha256::digest(&bytes)),
        scalars: values.len(),
        params,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.json", kind.tag()));
    let bin = dir.join(&blob);
    fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Loads and validates a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<(Model, CheckpointManifest)> {
    let manifest: CheckpointManifest = read_json(path)?;
    let fail = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if manifest.format_version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {} is not supported",
            manifest.format_version
        )));
    }
    let model = Model::new(manifest.kind, manifest.model_config.clone())?;
    let expected = model.params().entries();
    if expected.len() != manifest.params.len() {
        return Err(fail(format!(
            "registry has {} parameters, model expects {}",
            manifest.params.len(),
            expected.len()
        )));
    }
    let mut offset = 0;
    for (e, rec) in expected.iter().zip(&manifest.params) {
        if e.name != rec.name || e.tensor.shape() != rec.shape.as_slice() || rec.offset != offset {
            return Err(fail(format!(
                "parameter `{}` {:?} at {} does not match expected `{}` {:?} at {}",
                rec.name,
                rec.shape,
                rec.offset,
                e.name,
                e.tensor.shape(),
                offset
            )));
        }
        offset += e.tensor.numel();
    }
    if offset != manifest.scalars {
        return Err(fail(format!(
            "manifest lists {} scalars, registry holds {offset}",
            manifest.scalars
        )));
    }
    let bin = blob_path(path, &manifest.blob);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != offset * 8 {
        return Err(fail(format!(
            "blob has {} bytes, expected {}",
            bytes.len(),
            offset * 8
        )));
    }
    if hex::encode(Sha256::digest(&bytes)) != manifest.blob_sha256 {
        return Err(fail("blob checksum mismatch".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = model.params().unflatten(&values)?;
    let model = model.with_params(params)?;
    Ok((model, manifest))
}
