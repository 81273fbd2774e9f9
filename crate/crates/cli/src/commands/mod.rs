//! Harness commands. Each command is a pure function of (config, input
//! files, seed): reruns produce byte-identical artifacts.

mod cv;
mod mnist_bags;
mod report;
mod score;
mod train;

pub use cv::{run_cv, RunRecord};
pub use mnist_bags::{run_mnist_bags, MnistBagsArgs, TEST_BAG_COUNT};
pub use report::{run_report, ReportTables};
pub use score::run_score_instances;
pub use train::{run_train, TrainArtifacts};

use dsmil_core::data::{parse_grouped_csv, parse_schema_file, read_bags, Dataset};
use dsmil_core::error::{Error, Result};
use dsmil_core::model::{forward_bag, DsmilParams, ExtractorKind};
use dsmil_core::sigmoid;
use dsmil_core::tape::Tape;

use crate::config::{DataFormat, RunConfig};

pub(crate) fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let path = config.dataset_path()?;
    let dataset = match config.format {
        DataFormat::Bags => read_bags(path)?,
        DataFormat::Csv => {
            let schema_path = config.schema.as_deref().ok_or_else(|| {
                Error::Usage("csv format requires --schema (or config key `schema`)".into())
            })?;
            let schema = parse_schema_file(schema_path)?;
            parse_grouped_csv(path, &schema)?
        }
    };
    if dataset.is_empty() {
        return Err(Error::Data(format!("dataset {} has no bags", path.display())));
    }
    Ok(dataset)
}

/// Embedding width consistent with the extractor: the identity extractor
/// requires L to equal the raw feature dimension.
pub(crate) fn effective_l(config: &RunConfig, feature_dim: usize) -> usize {
    match config.extractor {
        ExtractorKind::Identity => feature_dim,
        _ => config.l,
    }
}

/// Sigmoid bag scores for a set of bags under fixed parameters.
pub(crate) fn score_bags(
    params: &DsmilParams,
    bags: &[dsmil_core::data::Bag],
) -> Result<Vec<f64>> {
    bags.iter()
        .map(|bag| {
            let mut tape = Tape::new();
            let fwd = forward_bag(&mut tape, &bag.instances, params)?;
            Ok(sigmoid(fwd.c_hat))
        })
        .collect()
}
