//! JSON checkpoint format.
//!
//! ```json
//! {
//!   "format": "kgqa-checkpoint",
//!   "version": 1,
//!   "metadata": { "...": "..." },
//!   "tensors": [ { "name": "entity_emb", "shape": [1001, 16], "data": [ ... ] } ]
//! }
//! ```
//!
//! Tensors appear in parameter order. Values are written with the shortest
//! representation that parses back to the identical `f64`, so save → load
//! is lossless and output bytes depend only on the parameter values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "kgqa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
    tensors: Vec<NamedTensor>,
}

pub type Metadata = BTreeMap<String, serde_json::Value>;

pub fn checkpoint_to_string(params: &ParamSet, metadata: &Metadata) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        metadata: metadata.clone(),
        tensors: params
            .iter()
            .map(|(_, name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn checkpoint_from_str(text: &str) -> Result<(ParamSet, Metadata)> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unexpected format `{}`", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", file.version)));
    }
    let mut params = ParamSet::new();
    for t in file.tensors {
        let tensor = Tensor::new(t.shape, t.data)
            .map_err(|e| Error::Checkpoint(format!("tensor `{}`: {e}", t.name)))?;
        params.insert(t.name, tensor)?;
    }
    Ok((params, file.metadata))
}

pub fn save_checkpoint(path: &Path, params: &ParamSet, metadata: &Metadata) -> Result<()> {
    let text = checkpoint_to_string(params, metadata)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamSet, Metadata)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
