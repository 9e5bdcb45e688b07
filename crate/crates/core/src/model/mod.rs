//! The channel-shuffle classifier: graph construction, forward pass, the
//! on-disk weight container, cost accounting and embedding export.

mod config;
mod container;
mod cost;
mod embed;
mod graph;

use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

pub use config::ModelConfig;
pub use container::{
    container_size, load_weights, load_weights_from_file, read_container, save_weights,
    save_weights_to_file, ContainerHeader, LoadedWeights, TensorEntry, FORMAT_VERSION, MAGIC,
};
pub use cost::{count_macs, count_params, profile, CostReport, LayerCost};
pub use embed::{export_embeddings, EmbeddingItem, EmbeddingSummary};
pub use graph::{
    build_model, shuffle_block_forward, BatchNorm, ConvBn, ForwardTrace, HeadView, Layer, Linear,
    ModelGraph, ParamKind, ParamMut, ParamRef, ShuffleBlock,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("weight container format error: {0}")]
    Format(String),
    #[error("weight container is missing {} tensor(s): {}", missing.len(), missing.join(", "))]
    Incomplete { missing: Vec<String> },
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {id}: {reason}")]
    Image { id: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;
