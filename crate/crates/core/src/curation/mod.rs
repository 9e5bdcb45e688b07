//! Dataset curation: exact and near-duplicate removal, canonical renaming,
//! stratified splitting, tiered augmentation and model-input preprocessing.

mod augment;
mod dedup;
mod hash;
mod pipeline;
mod plan;
mod preprocess;
mod rename;

use std::path::PathBuf;

use thiserror::Error;

pub use augment::{apply_augmentations, apply_op, plan_ops, AugmentKind, AugmentationOp, AUGMENT_SIZE};
pub use dedup::{dedup, scan_corpus, CorpusEntry, DedupOutcome, Removal, RemovalKind, Role, ScanOutcome, NEAR_DUPLICATE_THRESHOLD};
pub use hash::{digest_hex, hamming, hash_exact, hash_file, image_with_dhash, phash64, phash_file};
pub use pipeline::{curate, CurateOptions, CurateReport};
pub use plan::{augmentation_factor, augmentation_plan, split_counts, stratified_split, ClassPlan, CurationPlan};
pub use preprocess::{decode_image, preprocess, preprocess_bytes, preprocess_path, preprocess_tensor, IMAGENET_MEAN, IMAGENET_STD};
pub use rename::{class_file_stem, rename_normalize, RenameRecord};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{id}: cannot decode image: {reason}")]
    Decode { id: String, reason: String },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("{0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, CurationError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CurationError {
    let path = path.into();
    move |source| CurationError::Io { path, source }
}
