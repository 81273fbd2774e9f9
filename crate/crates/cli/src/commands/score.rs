//! `dsmil score-instances`: apply the max-pooling stream as a standalone
//! instance classifier to every instance of a bag file.

use std::io::Write;
use std::path::Path;

use dsmil_core::data::read_bags;
use dsmil_core::error::{Error, Result};
use dsmil_core::model::{load_snapshot, score_instance};
use dsmil_core::sigmoid;

/// Writes a TSV table (bag_id, instance index, raw score, sigmoid score).
pub fn run_score_instances(snapshot: &Path, bag_file: &Path, out: &mut dyn Write) -> Result<()> {
    let (params, _) = load_snapshot(snapshot)?;
    let dataset = read_bags(bag_file)?;
    if !dataset.is_empty() && dataset.feature_dim != params.extractor.input_dim() {
        return Err(Error::dimension(
            "score-instances",
            &[dataset.feature_dim],
            &[params.extractor.input_dim()],
        ));
    }
    writeln!(out, "bag_id\tinstance\traw_score\tsigmoid_score")?;
    for bag in &dataset.bags {
        for (i, instance) in bag.instances.iter().enumerate() {
            let raw = score_instance(instance, &params)?;
            writeln!(out, "{}\t{}\t{}\t{}", bag.bag_id, i, raw, sigmoid(raw))?;
        }
    }
    Ok(())
}
