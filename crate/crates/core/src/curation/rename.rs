use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::Serialize;

use super::{CorpusEntry, CurationError, Result};
use crate::classes::CLASS_NAMES;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenameRecord {
    pub old: PathBuf,
    pub new: String,
    pub class: String,
}

/// `Red Rot` → `RedRot`.
pub fn class_file_stem(class: usize) -> String {
    CLASS_NAMES[class].chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

fn extension(path: &std::path::Path) -> String {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(e) if e == "jpeg" => "jpg".into(),
        Some(e) => e,
        None => "jpg".into(),
    }
}

/// Assigns `ClassName_0001.ext` onward within each class, ordered by original path.
pub fn rename_normalize(survivors: &[CorpusEntry]) -> Result<Vec<RenameRecord>> {
    let mut by_class: BTreeMap<usize, Vec<&CorpusEntry>> = BTreeMap::new();
    for e in survivors {
        by_class.entry(e.class).or_default().push(e);
    }
    let mut out = Vec::with_capacity(survivors.len());
    let mut taken = HashSet::new();
    let mut sources = HashSet::new();
    for (class, mut entries) in by_class {
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let stem = class_file_stem(class);
        for (i, e) in entries.into_iter().enumerate() {
            let new = format!("{stem}_{:04}.{}", i + 1, extension(&e.path));
            if !sources.insert(e.path.clone()) {
                return Err(CurationError::Consistency(format!("{} listed twice", e.path.display())));
            }
            if !taken.insert(new.clone()) {
                return Err(CurationError::Consistency(format!("name collision on {new}")));
            }
            out.push(RenameRecord {
                old: e.path.clone(),
                new,
                class: CLASS_NAMES[class].to_string(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::class_index;
    use crate::curation::Role;
    use std::collections::HashMap;

    fn entry(path: &str, class: usize) -> CorpusEntry {
        CorpusEntry {
            path: path.into(),
            class,
            digest: [0; 16],
            hash: 0,
            role: Role::Unassigned,
        }
    }

    #[test]
    fn three_red_rot_files() {
        let rr = class_index("Red Rot").unwrap();
        let files = [entry("in/z.jpg", rr), entry("in/a.JPEG", rr), entry("in/m.jpg", rr)];
        let records = rename_normalize(&files).unwrap();
        let names: Vec<&str> = records.iter().map(|r| r.new.as_str()).collect();
        assert_eq!(names, ["RedRot_0001.jpg", "RedRot_0002.jpg", "RedRot_0003.jpg"]);
        assert_eq!(records[0].old, PathBuf::from("in/a.JPEG"));
    }

    #[test]
    fn empty_and_bijective() {
        assert!(rename_normalize(&[]).unwrap().is_empty());
        let files: Vec<_> = (0..10).map(|i| entry(&format!("x/{i}.png"), i % 3)).collect();
        let records = rename_normalize(&files).unwrap();
        let forward: HashMap<_, _> = records.iter().map(|r| (r.old.clone(), r.new.clone())).collect();
        let backward: HashMap<_, _> = records.iter().map(|r| (r.new.clone(), r.old.clone())).collect();
        assert_eq!(forward.len(), 10);
        assert_eq!(backward.len(), 10);
        for (old, new) in &forward {
            assert_eq!(&backward[new], old);
        }
    }

    #[test]
    fn duplicate_source_is_fatal() {
        let files = [entry("a.jpg", 0), entry("a.jpg", 0)];
        assert!(matches!(rename_normalize(&files), Err(CurationError::Consistency(_))));
    }
}
