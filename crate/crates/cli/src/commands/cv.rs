//! `dsmil cv`: repeated k-fold cross-validation.
//!
//! Repeat r reseeds the fold split with seed+r; each (repeat, fold) job
//! trains its own parameter set from a seed derived from (seed+r, fold), so
//! jobs are independent and may run on parallel workers (capped by
//! DSMIL_THREADS, default 1). Records are merged in (repeat, fold) order,
//! making the report bytes schedule-independent. Wall-clock time goes to
//! stderr, never into the report file.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use dsmil_core::data::{Bag, Dataset};
use dsmil_core::error::{Error, Result};
use dsmil_core::eval::{auc, confusion_metrics, kfold_split, EvalReport, MetricRecord};
use dsmil_core::model::{train_epoch, DsmilParams};
use dsmil_core::optim::Optimizer;
use dsmil_core::rng::{derive_seed, seeded};

use crate::config::{ConfigSnapshot, OptimizerKind, RunConfig};

use super::{effective_l, load_dataset, score_bags};

/// One cross-validation run: configuration snapshot, per-fold records and
/// aggregates. Serializes deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub toolkit_version: String,
    pub config: ConfigSnapshot,
    pub report: EvalReport,
    pub snapshot_paths: Vec<String>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

pub fn run_cv(config: &RunConfig) -> Result<(RunRecord, PathBuf)> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    if config.folds > dataset.len() {
        return Err(Error::Domain(format!(
            "{} folds requested but the dataset has {} bags",
            config.folds,
            dataset.len()
        )));
    }
    fs::create_dir_all(&config.out)?;

    let started = std::time::Instant::now();
    let jobs: Vec<(usize, usize)> = (0..config.repeats)
        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
        .collect();
    let workers = worker_count();
    let records = if workers <= 1 {
        jobs.iter()
            .map(|&(r, f)| run_fold(config, &dataset, r, f))
            .collect::<Result<Vec<_>>>()?
    } else {
        run_parallel(config, &dataset, &jobs, workers)?
    };

    let report = EvalReport::from_records(records)?;
    let record = RunRecord {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.snapshot(),
        report,
        snapshot_paths: Vec::new(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    let path = config.out.join("report.json");
    let mut text = serde_json::to_string_pretty(&record)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok((record, path))
}

fn worker_count() -> usize {
    std::env::var("DSMIL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn run_parallel(
    config: &RunConfig,
    dataset: &Dataset,
    jobs: &[(usize, usize)],
    workers: usize,
) -> Result<Vec<MetricRecord>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<MetricRecord>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (r, f) = jobs[i];
                let outcome = run_fold(config, dataset, r, f);
                slots.lock().expect("worker panicked").as_mut_slice()[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|slot| slot.expect("job slot filled"))
        .collect()
}

/// Trains on k-1 folds and evaluates the held-out fold.
fn run_fold(config: &RunConfig, dataset: &Dataset, repeat: usize, fold: usize) -> Result<MetricRecord> {
    let split_seed = config.seed.wrapping_add(repeat as u64);
    let plan = kfold_split(dataset.len(), config.folds, split_seed)?;
    let train_bags: Vec<Bag> = plan
        .train_indices(fold)
        .into_iter()
        .map(|i| dataset.bags[i].clone())
        .collect();
    let held_out: Vec<Bag> = plan
        .fold_indices(fold)
        .into_iter()
        .map(|i| dataset.bags[i].clone())
        .collect();

    let l = effective_l(config, dataset.feature_dim);
    let mut rng = seeded(derive_seed(split_seed, fold as u64));
    let mut params = DsmilParams::init(
        config.extractor,
        dataset.feature_dim,
        l,
        config.lambda,
        &mut rng,
    )?;
    let mut optimizer = match config.optimizer {
        OptimizerKind::Adam => Optimizer::adam(config.lr),
        OptimizerKind::Sgd => Optimizer::sgd(config.lr),
    };
    for epoch in 0..config.epochs {
        train_epoch(
            &train_bags,
            &mut params,
            &mut optimizer,
            config.mode,
            config.squash,
            epoch,
            &mut rng,
        )?;
    }

    let scores = score_bags(&params, &held_out)?;
    let labels: Vec<u8> = held_out.iter().map(|b| b.label).collect();
    let predictions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
    let cm = confusion_metrics(&predictions, &labels)?;
    // Single-class folds have no defined AUC; record null.
    let fold_auc = auc(&scores, &labels).ok();
    Ok(MetricRecord {
        run: repeat,
        fold,
        accuracy: cm.accuracy,
        auc: fold_auc,
        precision: cm.precision,
        recall: cm.recall,
        f_score: cm.f_score,
    })
}
