//! Library surface of the benchmark harness, exposed so integration tests
//! can drive the commands directly.

pub mod commands;
pub mod config;

pub use commands::{
    run_cv, run_mnist_bags, run_report, run_score_instances, run_train, MnistBagsArgs,
    ReportTables, RunRecord, TrainArtifacts, TEST_BAG_COUNT,
};
pub use config::{ConfigSnapshot, DataFormat, OptimizerKind, RunConfig};
