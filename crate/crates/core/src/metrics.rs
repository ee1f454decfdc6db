//! Confusion matrices and support-weighted precision/recall/F1.
//!
//! Weighted scores average the per-class values with weights proportional to
//! each class's true support, the ranking metric for shared tasks on this
//! data. Undefined precision/recall (zero denominator) counts as 0, matching
//! the dominant scoring-tool convention; this matters for degenerate
//! predictors that never emit some class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn add(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.n_classes + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of examples whose true class is `k`.
    pub fn support(&self, k: usize) -> u64 {
        (0..self.n_classes).map(|p| self.count(k, p)).sum()
    }
}

/// Tally predictions against labels.
pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut m = ConfusionMatrix::new(n_classes);
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Data(format!(
                "class index out of range: pred {p}, label {t}, n_classes {n_classes}"
            )));
        }
        m.add(t, p);
    }
    Ok(m)
}

/// Per-class precision/recall/F1 with its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Support-weighted averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// The full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedReport {
    pub per_class: Vec<ClassScores>,
    pub weighted: WeightedAverages,
    pub total: u64,
}

/// Compute the weighted report from a confusion matrix, naming classes by
/// index ("0", "1", ...).
pub fn weighted_prf(m: &ConfusionMatrix) -> Result<WeightedReport> {
    let names: Vec<String> = (0..m.n_classes()).map(|k| k.to_string()).collect();
    weighted_prf_named(m, &names)
}

/// [`weighted_prf`] with explicit class names.
pub fn weighted_prf_named(m: &ConfusionMatrix, label_names: &[String]) -> Result<WeightedReport> {
    if label_names.len() != m.n_classes() {
        return Err(Error::Schema(format!(
            "{} label names for {} classes",
            label_names.len(),
            m.n_classes()
        )));
    }
    let total = m.total();
    if total == 0 {
        return Err(Error::Data("empty confusion matrix".into()));
    }
    let mut per_class = Vec::with_capacity(m.n_classes());
    let mut weighted = WeightedAverages {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for k in 0..m.n_classes() {
        let tp = m.count(k, k);
        let support = m.support(k);
        let predicted: u64 = (0..m.n_classes()).map(|t| m.count(t, k)).sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if support == 0 {
            0.0
        } else {
            tp as f64 / support as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let weight = support as f64 / total as f64;
        weighted.precision += weight * precision;
        weighted.recall += weight * recall;
        weighted.f1 += weight * f1;
        per_class.push(ClassScores {
            label: label_names[k].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok(WeightedReport {
        per_class,
        weighted,
        total,
    })
}

impl WeightedReport {
    /// Full-precision JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table with two-decimal scores, columns in the order
    /// W-Precision, W-Recall, W-F1 Score.
    pub fn table(&self, dataset_name: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>12} {:>9} {:>11}\n",
            "Dataset", "W-Precision", "W-Recall", "W-F1 Score"
        ));
        out.push_str(&format!(
            "{:<16} {:>12.2} {:>9.2} {:>11.2}\n",
            dataset_name, self.weighted.precision, self.weighted.recall, self.weighted.f1
        ));
        out
    }
}
