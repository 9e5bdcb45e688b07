use serde::{Deserialize, Serialize};

use super::{accuracy, pr_curve_ap, precision_recall_f1, roc_auc, ConfusionMatrix, MetricsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub zero_division: bool,
    pub auc: Option<f64>,
    pub average_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassRow>,
}

/// Overall and per-class metrics. `scores` (one probability row per sample,
/// with its true label) adds one-vs-rest AUC and AP where defined.
pub fn report(cm: &ConfusionMatrix, names: &[&str], scores: Option<(&[Vec<f64>], &[usize])>) -> Result<EvalReport> {
    let k = cm.classes();
    if names.len() != k {
        return Err(MetricsError::Argument(format!("{} names for {k} classes", names.len())));
    }
    if let Some((rows, labels)) = scores {
        if rows.len() != labels.len() || rows.iter().any(|r| r.len() != k) {
            return Err(MetricsError::Argument("score matrix must be samples × classes".into()));
        }
    }
    let per = precision_recall_f1(cm)?;
    let total = cm.total() as f64;
    let kf = k as f64;
    let mut per_class = Vec::with_capacity(k);
    for m in &per {
        let (auc, ap) = match scores {
            Some((rows, labels)) => {
                let s: Vec<f64> = rows.iter().map(|r| r[m.class]).collect();
                let pos: Vec<bool> = labels.iter().map(|&l| l == m.class).collect();
                (roc_auc(&s, &pos).ok().map(|c| c.auc), pr_curve_ap(&s, &pos).ok().map(|c| c.average_precision))
            }
            None => (None, None),
        };
        per_class.push(ClassRow {
            class: names[m.class].to_string(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            support: m.support,
            accuracy: m.accuracy,
            ci_low: m.ci_low,
            ci_high: m.ci_high,
            zero_division: m.zero_division,
            auc,
            average_precision: ap,
        });
    }
    let weighted = |f: fn(&super::ClassMetrics) -> f64| per.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total;
    Ok(EvalReport {
        samples: cm.total(),
        accuracy: accuracy(cm)?,
        macro_precision: per.iter().map(|m| m.precision).sum::<f64>() / kf,
        macro_recall: per.iter().map(|m| m.recall).sum::<f64>() / kf,
        macro_f1: per.iter().map(|m| m.f1).sum::<f64>() / kf,
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        per_class,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// One row per class in report order.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.per_class {
            w.serialize(row).expect("in-memory CSV");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("UTF-8 CSV")
    }

    pub fn from_csv(text: &str) -> Result<Vec<ClassRow>> {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| MetricsError::Argument(format!("report CSV: {e}")))
    }
}
