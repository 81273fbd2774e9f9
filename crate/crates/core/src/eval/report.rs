//! Per-fold metric records and their mean/std aggregation.
//!
//! AUC is undefined when a held-out fold is single-class; such folds carry
//! `auc: null` and are skipped by the AUC aggregate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::aggregate;

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "auc", "precision", "recall", "f_score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl MetricRecord {
    fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "accuracy" => Some(self.accuracy),
            "auc" => self.auc,
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "f_score" => Some(self.f_score),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
    /// Mean/std over all run x fold records (the default reporting level).
    pub fold_level: BTreeMap<String, MetricSummary>,
    /// Mean/std over per-run means.
    pub run_level: BTreeMap<String, MetricSummary>,
}

impl EvalReport {
    pub fn from_records(records: Vec<MetricRecord>) -> Result<Self> {
        let mut fold_level = BTreeMap::new();
        let mut run_level = BTreeMap::new();
        for metric in METRIC_NAMES {
            let values: Vec<f64> = records.iter().filter_map(|r| r.get(metric)).collect();
            if values.is_empty() {
                continue;
            }
            let (mean, std) = aggregate(&values)?;
            fold_level.insert(
                metric.to_string(),
                MetricSummary {
                    mean,
                    std,
                    count: values.len(),
                },
            );

            let mut runs: Vec<usize> = records.iter().map(|r| r.run).collect();
            runs.sort_unstable();
            runs.dedup();
            let mut run_means = Vec::new();
            for run in runs {
                let vs: Vec<f64> = records
                    .iter()
                    .filter(|r| r.run == run)
                    .filter_map(|r| r.get(metric))
                    .collect();
                if !vs.is_empty() {
                    run_means.push(aggregate(&vs)?.0);
                }
            }
            if !run_means.is_empty() {
                let (mean, std) = aggregate(&run_means)?;
                run_level.insert(
                    metric.to_string(),
                    MetricSummary {
                        mean,
                        std,
                        count: run_means.len(),
                    },
                );
            }
        }
        Ok(EvalReport {
            records,
            fold_level,
            run_level,
        })
    }
}
