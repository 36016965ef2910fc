//! Binary model container.
//!
//! ```text
//! magic "DEIDCKPT" | u32 version | u64 header length | JSON header |
//! tensor data in header order, row-major f64 little-endian
//! ```
//!
//! [`Model::save`] also writes the header alone, pretty-printed, next to the
//! checkpoint with a `.json` extension appended.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::crf::LabelSet;
use super::model::Model;
use super::TaggerError;
use crate::embedding::{CharVocab, Config, TokenVocab};
use crate::features::FeatureSchema;
use crate::nn::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DEIDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub embedding_dim: usize,
    pub config: Config,
    pub schema_hash: String,
    pub schema: FeatureSchema,
    pub labels: Vec<String>,
    pub chars: CharVocab,
    pub tokens: TokenVocab,
    pub tensors: Vec<TensorEntry>,
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Model {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            embedding_dim: self.embedding_dim(),
            config: self.config.clone(),
            schema_hash: self.schema.hash(),
            schema: self.schema.clone(),
            labels: self.labels.names(),
            chars: self.chars.clone(),
            tokens: self.tokens.clone(),
            tensors: self
                .store
                .iter()
                .map(|(_, name, t)| TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.store.total_values());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, t) in self.store.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TaggerError> {
        let bad = |m: &str| TaggerError::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(TaggerError::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(20..)
            .filter(|b| b.len() >= hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])
            .map_err(|e| TaggerError::Checkpoint(format!("header: {e}")))?;
        if header.schema.hash() != header.schema_hash {
            return Err(bad("schema hash does not match the stored schema"));
        }
        let mut data = &body[hlen..];
        let mut store = ParamStore::new();
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            if data.len() < 8 * n {
                return Err(TaggerError::Checkpoint(format!("truncated tensor {}", entry.name)));
            }
            let values = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            data = &data[8 * n..];
            store.add(entry.name.clone(), Tensor::from_vec(&entry.shape, values)?);
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        let labels = LabelSet::from_names(&header.labels)?;
        let model = Model::from_parts(
            header.config,
            header.schema,
            labels,
            header.chars,
            header.tokens,
            store,
        )?;
        if model.embedding_dim() != header.embedding_dim {
            return Err(bad("embedding dimension does not match the stored tensors"));
        }
        Ok(model)
    }

    /// Write the checkpoint and its JSON header mirror.
    pub fn save(&self, path: &Path) -> Result<(), TaggerError> {
        let io = |e: std::io::Error| TaggerError::Io(format!("{}: {e}", path.display()));
        fs::write(path, self.to_bytes()).map_err(io)?;
        let mut json = serde_json::to_string_pretty(&self.header()).expect("header serializes");
        json.push('\n');
        fs::write(manifest_path(path), json).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, TaggerError> {
        let bytes =
            fs::read(path).map_err(|e| TaggerError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
