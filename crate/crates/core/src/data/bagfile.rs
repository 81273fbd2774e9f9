//! Canonical bag file: one JSON object per line (UTF-8, LF), fields
//! `bag_id`, `label`, `instances`, optional `instance_labels`. Values are
//! written in shortest round-trip decimal form, so read(write(d)) reproduces
//! every f64 bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Bag, Dataset};

pub fn write_bags(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for bag in &dataset.bags {
        let line = serde_json::to_string(bag)
            .map_err(|e| Error::Format(format!("bag {} does not serialize: {e}", bag.bag_id)))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_bags(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut bags = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bag: Bag = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        // Re-validate invariants the serialized form cannot enforce.
        let bag = Bag::new(bag.bag_id, bag.label, bag.instances, bag.instance_labels)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        bags.push(bag);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bags".into());
    Dataset::new(name, bags, format!("bag file {}", path.display()))
}
