use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{HpoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Float(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Float(v) => Some(*v),
            Self::Choice(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Self::Choice(s) => Some(s),
            Self::Float(_) => None,
        }
    }
}

/// One value per dimension name.
pub type Assignment = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DimKind {
    /// `[low, high]`, searched in log space when `log` is set.
    Float { low: f64, high: f64, log: bool },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimKind,
}

impl Dimension {
    pub fn uniform(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: DimKind::Float { low, high, log: false },
        }
    }

    pub fn log_uniform(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: DimKind::Float { low, high, log: true },
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: DimKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    /// Checks that `value` has the right type and lies within bounds.
    pub fn check(&self, value: &ParamValue) -> Result<()> {
        let oob = |reason: String| {
            Err(HpoError::OutOfBounds {
                dimension: self.name.clone(),
                reason,
            })
        };
        match (&self.kind, value) {
            (DimKind::Float { low, high, .. }, ParamValue::Float(v)) => {
                if !(low <= v && v <= high) {
                    return oob(format!("{v} outside [{low}, {high}]"));
                }
            }
            (DimKind::Categorical { choices }, ParamValue::Choice(c)) => {
                if !choices.contains(c) {
                    return oob(format!("{c:?} not one of {choices:?}"));
                }
            }
            (_, v) => return oob(format!("value {v:?} has the wrong type")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl Default for SearchSpace {
    /// Learning rate, optimiser, weight decay, two dropouts, freeze ratio,
    /// label smoothing and gradient-clip norm.
    fn default() -> Self {
        Self {
            dims: vec![
                Dimension::log_uniform("lr", 1e-5, 1e-2),
                Dimension::categorical("optimizer", &["Adam", "AdamW"]),
                Dimension::log_uniform("weight_decay", 1e-6, 1e-2),
                Dimension::uniform("dropout1", 0.1, 0.6),
                Dimension::uniform("dropout2", 0.1, 0.6),
                Dimension::uniform("freeze_ratio", 0.0, 0.8),
                Dimension::uniform("label_smoothing", 0.0, 0.2),
                Dimension::uniform("grad_clip", 0.5, 2.0),
            ],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(HpoError::Config("search space has no dimensions".into()));
        }
        let mut names = std::collections::HashSet::new();
        for d in &self.dims {
            if !names.insert(&d.name) {
                return Err(HpoError::Config(format!("duplicate dimension {}", d.name)));
            }
            match &d.kind {
                DimKind::Float { low, high, log } => {
                    if !(low.is_finite() && high.is_finite() && low < high) {
                        return Err(HpoError::Config(format!("{}: need finite low < high", d.name)));
                    }
                    if *log && *low <= 0.0 {
                        return Err(HpoError::Config(format!("{}: log scale needs low > 0", d.name)));
                    }
                }
                DimKind::Categorical { choices } => {
                    if choices.is_empty() {
                        return Err(HpoError::Config(format!("{}: no choices", d.name)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every dimension present, in bounds, and nothing extra.
    pub fn check(&self, assignment: &Assignment) -> Result<()> {
        for d in &self.dims {
            match assignment.get(&d.name) {
                Some(v) => d.check(v)?,
                None => {
                    return Err(HpoError::OutOfBounds {
                        dimension: d.name.clone(),
                        reason: "missing".into(),
                    })
                }
            }
        }
        if let Some(extra) = assignment.keys().find(|k| !self.dims.iter().any(|d| &d.name == *k)) {
            return Err(HpoError::OutOfBounds {
                dimension: extra.clone(),
                reason: "not in the search space".into(),
            });
        }
        Ok(())
    }
}
