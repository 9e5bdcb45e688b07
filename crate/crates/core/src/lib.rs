//! Sugarcane leaf-disease toolkit: a from-scratch channel-shuffle CNN inference
//! engine with Grad-CAM explanations, dataset curation, evaluation metrics and
//! a Tree-structured Parzen Estimator for hyperparameter search.

pub mod classes;
pub mod curation;
pub mod gradcam;
pub mod hpo;
pub mod metrics;
pub mod model;
pub mod tensor;

pub use classes::{class_index, CLASS_NAMES, NUM_CLASSES};
pub use model::{ModelConfig, ModelError, ModelGraph};
pub use tensor::{ConvSpec, Tensor, TensorError};
