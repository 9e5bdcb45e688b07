//! Penultimate-feature export for external visualisation tools.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::{ModelError, ModelGraph, Result};
use crate::curation::preprocess_path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingItem {
    pub id: String,
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingSummary {
    pub rows: usize,
    pub dims: usize,
    /// `(id, reason)` for every image that could not be embedded.
    pub skipped: Vec<(String, String)>,
}

/// Writes `id,label,f0..f{D-1}` CSV rows, one per readable image, where `D` is
/// the pooled feature width. Unreadable images are skipped and logged.
pub fn export_embeddings<W: Write>(model: &ModelGraph, items: &[EmbeddingItem], out: W) -> Result<EmbeddingSummary> {
    let size = model.config().input_size;
    let dims = model.config().final_conv_channels;
    let results: Vec<std::result::Result<Vec<f32>, String>> = items
        .par_iter()
        .map(|item| {
            let x = preprocess_path(&item.path, size).map_err(|e| e.to_string())?;
            model.embed(&x).map(|t| t.into_data()).map_err(|e| e.to_string())
        })
        .collect();

    let csv_err = |e: csv::Error| ModelError::Format(format!("embedding CSV: {e}"));
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dims).map(|i| format!("f{i}")));
    writer.write_record(&header).map_err(csv_err)?;

    let mut rows = 0;
    let mut skipped = Vec::new();
    for (item, result) in items.iter().zip(results) {
        match result {
            Ok(features) => {
                let mut record = Vec::with_capacity(dims + 2);
                record.push(item.id.clone());
                record.push(item.label.clone());
                record.extend(features.iter().map(f32::to_string));
                writer.write_record(&record).map_err(csv_err)?;
                rows += 1;
            }
            Err(reason) => {
                tracing::warn!(id = %item.id, %reason, "skipping image");
                skipped.push((item.id.clone(), reason));
            }
        }
    }
    writer.flush().map_err(|source| ModelError::Io {
        path: PathBuf::from("<embeddings>"),
        source,
    })?;
    Ok(EmbeddingSummary { rows, dims, skipped })
}
