//! Metrics and run aggregation.

mod kfold;
mod report;

pub use kfold::{kfold_split, FoldPlan};
pub use report::{EvalReport, MetricRecord, MetricSummary, METRIC_NAMES};

use crate::error::{Error, Result};

/// ROC AUC via the rank-sum (Mann-Whitney) statistic with average ranks for
/// ties, equal to (concordant + 0.5 * tied) / (P * N) over all
/// positive-negative pairs.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Usage(format!(
            "auc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain(
            "auc needs at least one positive and one negative label".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Average rank per tie group (1-based ranks), summed over positives.
    let mut rank_sum_pos = 0.0_f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Accuracy, precision, recall and F-score from binary predictions.
/// Zero-denominator precision/recall are defined as 0, and F is 0 when
/// precision + recall is 0, so the metrics are total.
pub fn confusion_metrics(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMetrics> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Usage(format!(
            "confusion_metrics: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut r#fn, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => r#fn += 1,
            (0, 0) => tn += 1,
            _ => {
                return Err(Error::Domain(format!(
                    "labels and predictions must be 0/1, got ({p}, {y})"
                )))
            }
        }
    }
    let total = (tp + fp + r#fn + tn) as f64;
    let accuracy = (tp + tn) as f64 / total;
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + r#fn == 0 {
        0.0
    } else {
        tp as f64 / (tp + r#fn) as f64
    };
    let f_score = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ConfusionMetrics {
        accuracy,
        precision,
        recall,
        f_score,
    })
}

/// Mean and sample (n-1) standard deviation; a single value has std 0.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Usage("aggregate of an empty record list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
