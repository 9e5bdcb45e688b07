use serde::{Deserialize, Serialize};

use super::{HpoError, Result};

/// Training-run settings carried alongside a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub trial_epochs: usize,
    pub trials: usize,
    pub patience: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 100,
            trial_epochs: 25,
            trials: 20,
            patience: 10,
        }
    }
}

/// Best configuration found for the shuffle backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedHyperparameters {
    pub lr: f64,
    pub optimizer: String,
    pub weight_decay: f64,
    pub dropout1: f64,
    pub dropout2: f64,
    pub freeze_ratio: f64,
    pub label_smoothing: f64,
    pub grad_clip: f64,
}

impl Default for TunedHyperparameters {
    fn default() -> Self {
        Self {
            lr: 6.17e-4,
            optimizer: "Adam".into(),
            weight_decay: 1.27e-4,
            dropout1: 0.480,
            dropout2: 0.492,
            freeze_ratio: 0.453,
            label_smoothing: 0.052,
            grad_clip: 1.702,
        }
    }
}

/// `eta_min + ½(eta_max − eta_min)(1 + cos(πt/T))`.
pub fn cosine_lr(t: usize, total: usize, eta_max: f64, eta_min: f64) -> Result<f64> {
    if total == 0 {
        return Err(HpoError::Argument("cosine schedule needs T ≥ 1".into()));
    }
    if t > total {
        return Err(HpoError::Argument(format!("epoch {t} beyond schedule length {total}")));
    }
    let phase = std::f64::consts::PI * t as f64 / total as f64;
    Ok(eta_min + 0.5 * (eta_max - eta_min) * (1.0 + phase.cos()))
}

/// Patience counter: a loss below `best − 1e-8` resets it, anything else
/// increments it, and training stops when it reaches `patience`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub counter: usize,
    pub stopped: bool,
}

impl EarlyStopping {
    pub const TOLERANCE: f64 = 1e-8;

    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(HpoError::Argument("patience must be at least 1".into()));
        }
        Ok(Self {
            patience,
            best: f64::INFINITY,
            counter: 0,
            stopped: false,
        })
    }

    /// Records one epoch's loss; returns `true` once training should stop.
    pub fn step(&mut self, loss: f64) -> bool {
        if loss < self.best - Self::TOLERANCE {
            self.best = loss;
            self.counter = 0;
        } else {
            self.counter += 1;
        }
        if self.counter >= self.patience {
            self.stopped = true;
        }
        self.stopped
    }
}

/// Cross-entropy against `(1−ε)·onehot(class) + ε/K`.
pub fn label_smooth_ce(logits: &[f64], class: usize, epsilon: f64) -> Result<f64> {
    let k = logits.len();
    if class >= k {
        return Err(HpoError::Argument(format!("class {class} out of range for {k} logits")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(HpoError::Argument(format!("epsilon {epsilon} must lie in [0, 1)")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let uniform = epsilon / k as f64;
    Ok(logits
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let target = uniform + if i == class { 1.0 - epsilon } else { 0.0 };
            -target * (z - lse)
        })
        .sum())
}

/// Gradient rescaling factor `min(1, max_norm / global_norm)`, 1 for a zero norm.
pub fn clip_scale(global_norm: f64, max_norm: f64) -> f64 {
    if global_norm <= max_norm || global_norm == 0.0 {
        1.0
    } else {
        max_norm / global_norm
    }
}
