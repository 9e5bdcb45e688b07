//! Confusion-matrix metrics, Wilson intervals, ROC/PR curves and reports.

mod curves;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curves::{pr_curve_ap, roc_auc, PrCurve, PrPoint, RocCurve, RocPoint};
pub use report::{report, EvalReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("undefined: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

/// `K × K` counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(MetricsError::Argument("confusion matrix must be square".into()));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.k + pred] += 1;
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        (0..self.k).map(|p| self.get(c, p)).sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, c)).sum()
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn fp(&self, c: usize) -> u64 {
        self.predicted(c) - self.tp(c)
    }

    pub fn fn_(&self, c: usize) -> u64 {
        self.support(c) - self.tp(c)
    }

    pub fn tn(&self, c: usize) -> u64 {
        self.total() - self.tp(c) - self.fp(c) - self.fn_(c)
    }

    pub fn correct(&self) -> u64 {
        (0..self.k).map(|c| self.tp(c)).sum()
    }
}

/// Counts `(truth, prediction)` pairs.
pub fn confusion(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::Argument(format!(
            "{} labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(k);
    for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        if t >= k || p >= k {
            return Err(MetricsError::Argument(format!(
                "sample {i}: label pair ({t}, {p}) outside 0..{k}"
            )));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

fn non_empty(cm: &ConfusionMatrix) -> Result<()> {
    if cm.total() == 0 {
        return Err(MetricsError::Argument("confusion matrix is empty".into()));
    }
    Ok(())
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fraction of correct predictions over all classes.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    non_empty(cm)?;
    Ok(ratio(cm.correct(), cm.total()))
}

/// One-vs-rest `(TP + TN) / total` for class `c`.
pub fn one_vs_rest_accuracy(cm: &ConfusionMatrix, c: usize) -> Result<f64> {
    non_empty(cm)?;
    Ok(ratio(cm.tp(c) + cm.tn(c), cm.total()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Share of this class's samples classified correctly (`TP / support`).
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Set when precision or recall had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

/// Per-class precision, recall, F1 and accuracy with a 95% Wilson interval.
///
/// F1 is `2TP / (2TP + FP + FN)`, 0 when that denominator is 0.
pub fn precision_recall_f1(cm: &ConfusionMatrix) -> Result<Vec<ClassMetrics>> {
    non_empty(cm)?;
    (0..cm.classes())
        .map(|c| {
            let (tp, fp, fn_) = (cm.tp(c), cm.fp(c), cm.fn_(c));
            let support = tp + fn_;
            let (ci_low, ci_high) = if support == 0 { (0.0, 1.0) } else { wilson_ci(tp, support, Z_95)? };
            Ok(ClassMetrics {
                class: c,
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, support),
                f1: ratio(2 * tp, 2 * tp + fp + fn_),
                support,
                accuracy: ratio(tp, support),
                ci_low,
                ci_high,
                zero_division: tp + fp == 0 || support == 0,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Unweighted mean of per-class F1 over all `K` classes.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(mean(precision_recall_f1(cm)?.iter().map(|m| m.f1)))
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let per = precision_recall_f1(cm)?;
    let total = cm.total() as f64;
    Ok(per.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / total)
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_ci(k: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(MetricsError::Argument("Wilson interval needs n > 0".into()));
    }
    if k > n {
        return Err(MetricsError::Argument(format!("{k} successes exceed {n} trials")));
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = if k == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let high = if k == n { 1.0 } else { (centre + half).clamp(p, 1.0) };
    Ok((low, high))
}
