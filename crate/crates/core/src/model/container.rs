//! `CNEW` weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CNEW" | version: u32 | header_len: u64 | header: JSON (header_len bytes) | payload
//! ```
//!
//! The header is `{"tensors": [{name, dtype, shape, offset, byte_length}, ...]}`
//! with entries sorted by name and offsets (relative to the payload start)
//! strictly ascending and non-overlapping. Tensors are raw `f32` LE.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelGraph, Result};

pub const MAGIC: &[u8; 4] = b"CNEW";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub byte_length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub tensors: Vec<TensorEntry>,
}

fn format_err(msg: impl Into<String>) -> ModelError {
    ModelError::Format(msg.into())
}

fn header_for(model: &ModelGraph) -> ContainerHeader {
    let mut params: Vec<_> = model
        .params()
        .into_iter()
        .map(|p| (p.name, p.shape, p.data.len()))
        .collect();
    params.sort_by(|a, b| a.0.cmp(&b.0));
    let mut offset = 0u64;
    let tensors = params
        .into_iter()
        .map(|(name, shape, len)| {
            let byte_length = 4 * len as u64;
            let entry = TensorEntry {
                name,
                dtype: "f32".into(),
                shape,
                offset,
                byte_length,
            };
            offset += byte_length;
            entry
        })
        .collect();
    ContainerHeader { tensors }
}

/// Serialises every parameter and buffer of `model`.
pub fn save_weights(model: &ModelGraph) -> Vec<u8> {
    let header = header_for(model);
    let header_json = serde_json::to_vec(&header).expect("header is plain data");
    let payload_len: u64 = header.tensors.iter().map(|t| t.byte_length).sum();
    let mut out = Vec::with_capacity(PREAMBLE + header_json.len() + payload_len as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    let by_name: HashMap<String, &[f32]> = model.params().into_iter().map(|p| (p.name, p.data)).collect();
    for entry in &header.tensors {
        for v in by_name[&entry.name] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Exact byte size `save_weights` would produce, without serialising the payload.
pub fn container_size(model: &ModelGraph) -> u64 {
    let header = header_for(model);
    let header_len = serde_json::to_vec(&header).expect("header is plain data").len() as u64;
    PREAMBLE as u64 + header_len + header.tensors.iter().map(|t| t.byte_length).sum::<u64>()
}

/// Parses and structurally validates a container, returning its header and payload.
pub fn read_container(bytes: &[u8]) -> Result<(ContainerHeader, &[u8])> {
    if bytes.len() < PREAMBLE {
        return Err(format_err(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|l| PREAMBLE.checked_add(l))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format_err(format!("header length {header_len} exceeds file size")))?;
    let header: ContainerHeader = serde_json::from_slice(&bytes[PREAMBLE..header_end])
        .map_err(|e| format_err(format!("invalid header JSON: {e}")))?;
    let payload = &bytes[header_end..];

    let mut expected_offset = 0u64;
    let mut names = HashMap::new();
    for entry in &header.tensors {
        let name = &entry.name;
        if names.insert(name.as_str(), ()).is_some() {
            return Err(format_err(format!("duplicate tensor {name}")));
        }
        if entry.dtype != "f32" {
            return Err(format_err(format!("tensor {name}: unsupported dtype {}", entry.dtype)));
        }
        let elements = entry
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| format_err(format!("tensor {name}: shape overflows")))?;
        if entry.byte_length != 4 * elements {
            return Err(format_err(format!(
                "tensor {name}: byte_length {} does not match shape {:?}",
                entry.byte_length, entry.shape
            )));
        }
        if entry.offset < expected_offset {
            return Err(format_err(format!(
                "tensor {name}: offset {} overlaps or is out of order",
                entry.offset
            )));
        }
        let end = entry.offset + entry.byte_length;
        if end > payload.len() as u64 {
            return Err(format_err(format!(
                "tensor {name}: payload truncated ({} bytes, need {end})",
                payload.len()
            )));
        }
        expected_offset = end;
    }
    Ok((header, payload))
}

#[derive(Debug)]
pub struct LoadedWeights {
    pub model: ModelGraph,
    /// Tensors present in the container that the model does not use.
    pub unknown: Vec<String>,
}

/// Loads a container into a graph built from `config`.
///
/// Missing tensors are an error listing every missing name; extra tensors are
/// reported in [`LoadedWeights::unknown`] and logged as warnings.
pub fn load_weights(bytes: &[u8], config: &ModelConfig) -> Result<LoadedWeights> {
    let (header, payload) = read_container(bytes)?;
    let mut model = ModelGraph::skeleton(config)?;
    let entries: HashMap<&str, &TensorEntry> = header.tensors.iter().map(|e| (e.name.as_str(), e)).collect();

    let mut missing = Vec::new();
    let mut used = HashMap::new();
    for param in model.params_mut() {
        let Some(entry) = entries.get(param.name.as_str()) else {
            missing.push(param.name);
            continue;
        };
        if entry.shape != param.shape {
            return Err(format_err(format!(
                "tensor {}: shape {:?} does not match model shape {:?}",
                param.name, entry.shape, param.shape
            )));
        }
        let start = entry.offset as usize;
        let raw = &payload[start..start + entry.byte_length as usize];
        for (dst, chunk) in param.data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
        used.insert(param.name, ());
    }
    if !missing.is_empty() {
        return Err(ModelError::Incomplete { missing });
    }
    let unknown: Vec<String> = header
        .tensors
        .iter()
        .filter(|e| !used.contains_key(&e.name))
        .map(|e| e.name.clone())
        .collect();
    for name in &unknown {
        tracing::warn!(tensor = %name, "ignoring unknown tensor in weight container");
    }
    model.validate()?;
    Ok(LoadedWeights { model, unknown })
}

pub fn save_weights_to_file(model: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, save_weights(model)).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_weights_from_file(path: impl AsRef<Path>, config: &ModelConfig) -> Result<LoadedWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_weights(&bytes, config)
}
