use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::space::{Assignment, SearchSpace};
use super::tpe::{suggest, TpeConfig};
use super::{HpoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Completed,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub number: usize,
    pub assignment: Assignment,
    /// Validation loss; lower is better.
    pub objective: f64,
    pub state: TrialState,
}

/// Appends `record` after checking it against `space`.
pub fn observe(history: &mut Vec<TrialRecord>, space: &SearchSpace, record: TrialRecord) -> Result<()> {
    space.check(&record.assignment)?;
    history.push(record);
    Ok(())
}

/// Completed trial with the lowest objective; the earliest wins ties.
pub fn best(history: &[TrialRecord]) -> Result<&TrialRecord> {
    history
        .iter()
        .filter(|t| t.state == TrialState::Completed && !t.objective.is_nan())
        .fold(None, |acc: Option<&TrialRecord>, t| match acc {
            Some(b) if b.objective <= t.objective => Some(b),
            _ => Some(t),
        })
        .ok_or(HpoError::Empty)
}

/// `(log10(lr) + 3.5)² + (dropout1 − 0.35)²`.
pub fn synthetic_objective(a: &Assignment) -> f64 {
    let lr = a.get("lr").and_then(|v| v.as_f64()).unwrap_or(1.0);
    let d1 = a.get("dropout1").and_then(|v| v.as_f64()).unwrap_or(0.0);
    (lr.log10() + 3.5).powi(2) + (d1 - 0.35).powi(2)
}

fn persist_err(path: &Path, reason: impl ToString) -> HpoError {
    HpoError::Persistence {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Reads a JSON-lines study file; blank lines are ignored.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| persist_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| persist_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| persist_err(path, format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Ask/tell driver with optional append-only persistence.
#[derive(Debug, Clone)]
pub struct Study {
    pub space: SearchSpace,
    pub config: TpeConfig,
    pub history: Vec<TrialRecord>,
    path: Option<PathBuf>,
}

impl Study {
    pub fn new(space: SearchSpace, config: TpeConfig) -> Result<Self> {
        space.validate()?;
        config.validate()?;
        Ok(Self {
            space,
            config,
            history: Vec::new(),
            path: None,
        })
    }

    /// Resumes from `path` if it exists, then appends every new trial to it.
    pub fn open(path: impl Into<PathBuf>, space: SearchSpace, config: TpeConfig) -> Result<Self> {
        let path = path.into();
        let mut study = Self::new(space, config)?;
        if path.exists() {
            for record in load_jsonl(&path)? {
                observe(&mut study.history, &study.space, record)?;
            }
        }
        study.path = Some(path);
        Ok(study)
    }

    pub fn ask(&self) -> Result<Assignment> {
        suggest(&self.history, &self.space, &self.config)
    }

    pub fn tell(&mut self, assignment: Assignment, objective: f64, state: TrialState) -> Result<&TrialRecord> {
        let record = TrialRecord {
            number: self.history.len(),
            assignment,
            objective,
            state,
        };
        self.space.check(&record.assignment)?;
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&record).map_err(|e| persist_err(path, e))?;
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| persist_err(path, e))?;
            writeln!(f, "{line}").map_err(|e| persist_err(path, e))?;
        }
        self.history.push(record);
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn best(&self) -> Result<&TrialRecord> {
        best(&self.history)
    }
}

/// Runs `trials` ask/evaluate/tell rounds in memory.
pub fn run_study(
    space: &SearchSpace,
    config: &TpeConfig,
    trials: usize,
    mut objective: impl FnMut(&Assignment) -> f64,
) -> Result<Vec<TrialRecord>> {
    let mut study = Study::new(space.clone(), config.clone())?;
    for _ in 0..trials {
        let a = study.ask()?;
        let y = objective(&a);
        study.tell(a, y, TrialState::Completed)?;
    }
    Ok(study.history)
}
