//! Model loading and single-image prediction shared by the server and CLI.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cane_core::curation::{decode_image, preprocess};
use cane_core::gradcam::{gradcam_map, CamResult};
use cane_core::model::{load_weights, FORMAT_VERSION};
use cane_core::{ModelConfig, ModelGraph, CLASS_NAMES};

pub const TOP_K: usize = 5;

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: ModelGraph,
    pub path: PathBuf,
    /// Hex SHA-256 of the container file.
    pub checksum: String,
    pub format_version: u32,
    pub file_size: u64,
}

/// Reads a weight container. Without an explicit config the default backbone is
/// tried first, then the small test variant.
pub fn load_model(path: impl AsRef<Path>, config: Option<&ModelConfig>) -> anyhow::Result<LoadedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    let candidates = match config {
        Some(c) => vec![c.clone()],
        None => vec![ModelConfig::default(), ModelConfig::small()],
    };
    let mut first_err = None;
    for cfg in &candidates {
        match load_weights(&bytes, cfg) {
            Ok(loaded) => {
                return Ok(LoadedModel {
                    model: loaded.model,
                    path: path.to_path_buf(),
                    checksum: hex_sha256(&bytes),
                    format_version: FORMAT_VERSION,
                    file_size: bytes.len() as u64,
                })
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let err = first_err.expect("at least one candidate config");
    Err(anyhow!(err).context(format!("loading model {}", path.display())))
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_config(path: impl AsRef<Path>) -> anyhow::Result<ModelConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ModelConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub index: usize,
    pub confidence: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub top1: ClassScore,
    pub top5: Vec<ClassScore>,
    /// Base64 PNG of the Grad-CAM overlay for `top1`.
    pub gradcam: String,
    pub latency_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error(transparent)]
    Model(#[from] cane_core::ModelError),
}

/// Indices of the `k` largest values, descending, ties to the lower index.
pub fn top_k(probs: &[f32], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn score(probs: &[f32], i: usize) -> ClassScore {
    ClassScore {
        class: CLASS_NAMES.get(i).map_or_else(|| format!("class {i}"), |s| s.to_string()),
        index: i,
        confidence: probs[i],
    }
}

/// Decode, preprocess, forward and explain `target` (argmax when `None`).
pub fn explain_bytes(model: &ModelGraph, bytes: &[u8], target: Option<usize>) -> Result<CamResult, PredictError> {
    let rgb = decode_image(bytes).map_err(|e| PredictError::Decode(e.to_string()))?;
    let input = preprocess(&rgb, model.config().input_size);
    Ok(gradcam_map(model, &input, target)?)
}

pub fn predict_bytes(model: &ModelGraph, bytes: &[u8]) -> Result<Prediction, PredictError> {
    let start = Instant::now();
    let cam = explain_bytes(model, bytes, None)?;
    let top = top_k(&cam.probabilities, TOP_K);
    let gradcam = base64::engine::general_purpose::STANDARD.encode(cam.overlay_png());
    Ok(Prediction {
        top1: score(&cam.probabilities, top[0]),
        top5: top.iter().map(|&i| score(&cam.probabilities, i)).collect(),
        gradcam,
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
