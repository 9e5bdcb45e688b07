use serde::Serialize;

use super::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Starts at `(0, 0)` with threshold `+inf`, ends at `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub average_precision: f64,
}

fn check(scores: &[f64], positive: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != positive.len() {
        return Err(MetricsError::Argument(format!(
            "{} scores but {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricsError::Argument("scores contain NaN".into()));
    }
    let pos = positive.iter().filter(|&&p| p).count() as u64;
    Ok((pos, positive.len() as u64 - pos))
}

/// Cumulative `(threshold, tp, fp)` at each distinct score, descending.
fn sweep(scores: &[f64], positive: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// One-vs-rest ROC curve; tied scores form a single step, so the trapezoid
/// area equals the Mann-Whitney statistic with ties counted as one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check(scores, positive)?;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::Undefined("ROC AUC needs both positive and negative samples".into()));
    }
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut area = 0.0;
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    for (threshold, tp, fp) in sweep(scores, positive) {
        area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        (prev_tp, prev_fp) = (tp, fp);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve {
        points,
        auc: area / (pos as f64 * neg as f64),
    })
}

/// Precision/recall at every distinct threshold and
/// `AP = Σ (R_i − R_{i−1}) · P_i` over the descending sweep.
pub fn pr_curve_ap(scores: &[f64], positive: &[bool]) -> Result<PrCurve> {
    let (pos, _) = check(scores, positive)?;
    if pos == 0 {
        return Err(MetricsError::Undefined("average precision needs at least one positive".into()));
    }
    let mut points = Vec::new();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (threshold, tp, fp) in sweep(scores, positive) {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold,
            precision,
            recall,
        });
    }
    Ok(PrCurve {
        points,
        average_precision: ap,
    })
}
