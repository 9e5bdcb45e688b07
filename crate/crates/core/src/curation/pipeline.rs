use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::augment::apply_augmentations;
use super::dedup::{dedup, scan_corpus, RemovalKind, Role, NEAR_DUPLICATE_THRESHOLD};
use super::plan::{stratified_split, CurationPlan, DEFAULT_TRAIN_FRACTION};
use super::rename::{class_file_stem, rename_normalize};
use super::{io_err, CurationError, Result};

#[derive(Debug, Clone)]
pub struct CurateOptions {
    pub seed: u64,
    pub train_fraction: f64,
    pub threshold: u32,
    /// Write augmented training copies, not just the plan.
    pub augment: bool,
}

impl Default for CurateOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            threshold: NEAR_DUPLICATE_THRESHOLD,
            augment: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurateReport {
    pub scanned: usize,
    pub skipped: Vec<(PathBuf, String)>,
    pub exact_removed: usize,
    pub near_removed: usize,
    pub survivors: usize,
    pub augmented_written: usize,
    pub plan: CurationPlan,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CurationError + '_ {
    move |e| CurationError::Output(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CurationError::Output(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Runs scan → dedup → split → rename → augment over `input/<class>/*` and
/// writes `train/`, `test/`, `manifest.csv`, `removals.csv`, `plan.json` and
/// `report.json` under `output`.
pub fn curate(input: impl AsRef<Path>, output: impl AsRef<Path>, options: &CurateOptions) -> Result<CurateReport> {
    let output = output.as_ref();
    std::fs::create_dir_all(output).map_err(io_err(output))?;

    let scan = scan_corpus(input)?;
    let scanned = scan.entries.len();
    let outcome = dedup(scan.entries, options.threshold);

    let removals_path = output.join("removals.csv");
    let mut w = csv::Writer::from_path(&removals_path).map_err(csv_err(&removals_path))?;
    for r in &outcome.removals {
        w.serialize(r).map_err(csv_err(&removals_path))?;
    }
    if outcome.removals.is_empty() {
        w.write_record(["path", "class", "kind", "matched", "distance"]).map_err(csv_err(&removals_path))?;
    }
    w.flush().map_err(io_err(&removals_path))?;

    let mut survivors = outcome.survivors;
    let split = stratified_split(&mut survivors, options.train_fraction, options.seed);
    let plan = split.with_augmentation();
    let factors: HashMap<&str, usize> = plan.classes.iter().map(|c| (c.class.as_str(), c.factor)).collect();
    let renames = rename_normalize(&survivors)?;
    let new_names: HashMap<&Path, &str> = renames.iter().map(|r| (r.old.as_path(), r.new.as_str())).collect();

    let jobs: Vec<_> = survivors
        .iter()
        .map(|e| {
            let split_dir = if e.role == Role::Train { "train" } else { "test" };
            let dir = output.join(split_dir).join(class_file_stem(e.class));
            let name = new_names[e.path.as_path()].to_string();
            let factor = if e.role == Role::Train && options.augment {
                factors[e.class_name()]
            } else {
                0
            };
            (e, dir, name, factor)
        })
        .collect();
    let written: Vec<usize> = jobs
        .par_iter()
        .map(|(e, dir, name, factor)| -> Result<usize> {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            let dst = dir.join(name);
            std::fs::copy(&e.path, &dst).map_err(io_err(&e.path))?;
            if *factor == 0 {
                return Ok(0);
            }
            let img = image::open(&e.path)
                .map_err(|err| CurationError::Decode {
                    id: e.path.display().to_string(),
                    reason: err.to_string(),
                })?
                .to_rgb8();
            let stem = name.rsplit_once('.').map_or(name.as_str(), |(s, _)| s);
            let augmented = apply_augmentations(&img, name, *factor, options.seed);
            for (k, (_, out)) in augmented.iter().enumerate() {
                let path = dir.join(format!("{stem}_aug{}.png", k + 1));
                out.save(&path).map_err(|err| CurationError::Output(format!("{}: {err}", path.display())))?;
            }
            Ok(augmented.len())
        })
        .collect::<Result<_>>()?;

    let manifest_path = output.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest_path).map_err(csv_err(&manifest_path))?;
    w.write_record(["old_path", "new_name", "class", "split"]).map_err(csv_err(&manifest_path))?;
    for e in &survivors {
        let split = if e.role == Role::Train { "train" } else { "test" };
        let old = e.path.display().to_string();
        w.write_record([old.as_str(), new_names[e.path.as_path()], e.class_name(), split])
            .map_err(csv_err(&manifest_path))?;
    }
    w.flush().map_err(io_err(&manifest_path))?;

    write_json(&output.join("plan.json"), &plan)?;
    let report = CurateReport {
        scanned,
        skipped: scan.skipped,
        exact_removed: outcome.removals.iter().filter(|r| r.kind == RemovalKind::Exact).count(),
        near_removed: outcome.removals.iter().filter(|r| r.kind == RemovalKind::Near).count(),
        survivors: survivors.len(),
        augmented_written: written.iter().sum(),
        plan,
    };
    write_json(&output.join("report.json"), &report)?;
    Ok(report)
}
