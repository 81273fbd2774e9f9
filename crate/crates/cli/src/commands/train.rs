//! `dsmil train`: fit on the full dataset, write the model snapshot and a
//! per-epoch loss log.

use std::fs;
use std::path::PathBuf;

use dsmil_core::error::Result;
use dsmil_core::model::{save_snapshot, train_epoch, DsmilParams};
use dsmil_core::optim::Optimizer;
use dsmil_core::rng::seeded;

use crate::config::{OptimizerKind, RunConfig};

use super::{effective_l, load_dataset};

#[derive(Debug)]
pub struct TrainArtifacts {
    pub snapshot_path: PathBuf,
    pub log_path: PathBuf,
    pub losses: Vec<f64>,
}

pub fn run_train(config: &RunConfig) -> Result<TrainArtifacts> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    fs::create_dir_all(&config.out)?;

    let l = effective_l(config, dataset.feature_dim);
    let mut rng = seeded(config.seed);
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

    let mut losses = Vec::with_capacity(config.epochs);
    let mut log = String::new();
    for epoch in 0..config.epochs {
        let loss = train_epoch(
            &dataset.bags,
            &mut params,
            &mut optimizer,
            config.mode,
            config.squash,
            epoch,
            &mut rng,
        )?;
        losses.push(loss);
        log.push_str(&format!("{epoch},{loss}\n"));
    }

    let snapshot_path = config.out.join("model.snapshot");
    save_snapshot(&params, config.seed, &snapshot_path)?;
    let log_path = config.out.join("train_log.txt");
    fs::write(&log_path, log)?;

    Ok(TrainArtifacts {
        snapshot_path,
        log_path,
        losses,
    })
}
