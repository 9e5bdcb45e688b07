use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::hash::{hamming, hash_exact, phash64};
use super::{io_err, CurationError, Result};
use crate::classes::{class_index, CLASS_NAMES};

/// Maximum Hamming distance at which two images count as near duplicates.
pub const NEAR_DUPLICATE_THRESHOLD: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalKind {
    Exact,
    Near,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Role {
    Unassigned,
    Train,
    Test,
    Removed { kind: RemovalKind, matched: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub class: usize,
    pub digest: [u8; 16],
    pub hash: u64,
    pub role: Role,
}

impl CorpusEntry {
    /// Hashes an encoded image.
    pub fn from_bytes(path: impl Into<PathBuf>, class: usize, bytes: &[u8]) -> Result<Self> {
        let path = path.into();
        let img = image::load_from_memory(bytes).map_err(|e| CurationError::Decode {
            id: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            digest: hash_exact(bytes),
            hash: phash64(&img),
            path,
            class,
            role: Role::Unassigned,
        })
    }

    pub fn class_name(&self) -> &'static str {
        CLASS_NAMES[self.class]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Removal {
    pub path: PathBuf,
    pub class: String,
    pub kind: RemovalKind,
    pub matched: PathBuf,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub survivors: Vec<CorpusEntry>,
    pub removals: Vec<Removal>,
}

/// Two-pass deduplication across the whole corpus.
///
/// Pass one drops byte-identical files, keeping the lexicographically smallest
/// path. Pass two scans the remaining files in path order and drops any file
/// within `threshold` bits of an already kept one (the earliest such match is
/// reported).
pub fn dedup(mut entries: Vec<CorpusEntry>, threshold: u32) -> DedupOutcome {
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let mut removals = Vec::new();

    let mut first_by_digest: HashMap<[u8; 16], PathBuf> = HashMap::new();
    let mut unique = Vec::with_capacity(entries.len());
    for e in entries {
        match first_by_digest.get(&e.digest) {
            Some(original) => {
                removals.push(Removal {
                    path: e.path.clone(),
                    class: e.class_name().to_string(),
                    kind: RemovalKind::Exact,
                    matched: original.clone(),
                    distance: 0,
                });
            }
            None => {
                first_by_digest.insert(e.digest, e.path.clone());
                unique.push(e);
            }
        }
    }

    let mut survivors: Vec<CorpusEntry> = Vec::with_capacity(unique.len());
    for e in unique {
        let hit = survivors
            .iter()
            .map(|k| (k, hamming(k.hash, e.hash)))
            .find(|&(_, d)| d <= threshold);
        match hit {
            Some((kept, distance)) => removals.push(Removal {
                path: e.path.clone(),
                class: e.class_name().to_string(),
                kind: RemovalKind::Near,
                matched: kept.path.clone(),
                distance,
            }),
            None => survivors.push(e),
        }
    }
    DedupOutcome { survivors, removals }
}

#[derive(Debug, Default)]
pub struct ScanOutcome {
    pub entries: Vec<CorpusEntry>,
    /// `(path, reason)` for files that were not hashed.
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("jpg" | "jpeg" | "png")
    )
}

/// Hashes every JPEG/PNG under `root/<class dir>/`. Directories that do not
/// name a known class, and files that fail to decode, are skipped.
pub fn scan_corpus(root: impl AsRef<Path>) -> Result<ScanOutcome> {
    let root = root.as_ref();
    let mut files = Vec::new();
    let mut skipped = Vec::new();
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(io_err(root))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err(root))?;
    dirs.sort_by_key(|d| d.path());
    for dir in dirs {
        let path = dir.path();
        if !path.is_dir() {
            continue;
        }
        let name = dir.file_name().to_string_lossy().into_owned();
        let Some(class) = class_index(&name).filter(|_| name.parse::<usize>().is_err()) else {
            tracing::warn!(dir = %path.display(), "not a class directory");
            skipped.push((path, "unknown class directory".to_string()));
            continue;
        };
        for f in std::fs::read_dir(&path).map_err(io_err(&path))? {
            let f = f.map_err(io_err(&path))?.path();
            if f.is_file() && is_image(&f) {
                files.push((f, class));
            }
        }
    }
    let hashed: Vec<_> = files
        .into_par_iter()
        .map(|(path, class)| {
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            CorpusEntry::from_bytes(path, class, &bytes)
        })
        .collect();
    let mut entries = Vec::new();
    for r in hashed {
        match r {
            Ok(e) => entries.push(e),
            Err(CurationError::Decode { id, reason }) => {
                tracing::warn!(file = %id, %reason, "skipping undecodable image");
                skipped.push((PathBuf::from(id), reason));
            }
            Err(e) => return Err(e),
        }
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(ScanOutcome { entries, skipped })
}
