//! Grouped-CSV ingestion for pre-extracted feature-vector datasets
//! (MUSK1/MUSK2, FOX, TIGER, ELEPHANT distributions and the like).
//!
//! Rows sharing a bag id form one bag, in first-appearance order; the label
//! column must agree across all rows of a bag.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Bag, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub delimiter: u8,
    pub has_header: bool,
    pub bag_id_col: usize,
    pub label_col: usize,
    pub feature_cols: Range<usize>,
    /// Textual label -> 0/1, e.g. {"1" -> 1, "0" -> 0} or {"+1" -> 1, "-1" -> 0}.
    pub label_map: Vec<(String, u8)>,
}

impl CsvSchema {
    fn validate(&self) -> Result<()> {
        if self.feature_cols.is_empty() {
            return Err(Error::Data("schema has an empty feature column range".into()));
        }
        let in_features = |c: usize| self.feature_cols.contains(&c);
        if self.bag_id_col == self.label_col
            || in_features(self.bag_id_col)
            || in_features(self.label_col)
        {
            return Err(Error::Data(
                "schema column indices overlap (bag id, label, features must be disjoint)".into(),
            ));
        }
        if self.label_map.is_empty() {
            return Err(Error::Data("schema label map is empty".into()));
        }
        Ok(())
    }

    fn map_label(&self, raw: &str) -> Result<u8> {
        let raw = raw.trim();
        self.label_map
            .iter()
            .find(|(k, _)| k == raw)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Data(format!("unmappable label value {raw:?}")))
    }
}

/// Parses a schema description in `key=value` lines. Recognized keys:
/// `delimiter`, `has_header`, `bag_id_col`, `label_col`, `feature_cols`
/// (as `start..end`), `label_map` (as `raw:bit` pairs joined by commas).
pub fn parse_schema_file(path: &Path) -> Result<CsvSchema> {
    let text = fs::read_to_string(path)?;
    let mut delimiter = b',';
    let mut has_header = false;
    let mut bag_id_col = None;
    let mut label_col = None;
    let mut feature_cols = None;
    let mut label_map = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("schema line {}: expected key=value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "delimiter" => {
                let bytes = value.as_bytes();
                if bytes.len() != 1 {
                    return Err(Error::Format(format!(
                        "schema line {}: delimiter must be a single byte",
                        lineno + 1
                    )));
                }
                delimiter = bytes[0];
            }
            "has_header" => {
                has_header = value.parse::<bool>().map_err(|_| {
                    Error::Format(format!("schema line {}: bad bool {value:?}", lineno + 1))
                })?;
            }
            "bag_id_col" => bag_id_col = Some(parse_usize(value, lineno)?),
            "label_col" => label_col = Some(parse_usize(value, lineno)?),
            "feature_cols" => {
                let (a, b) = value.split_once("..").ok_or_else(|| {
                    Error::Format(format!(
                        "schema line {}: feature_cols must be start..end",
                        lineno + 1
                    ))
                })?;
                feature_cols = Some(parse_usize(a, lineno)?..parse_usize(b, lineno)?);
            }
            "label_map" => {
                for pair in value.split(',') {
                    let (raw, bit) = pair.rsplit_once(':').ok_or_else(|| {
                        Error::Format(format!(
                            "schema line {}: label_map entries are raw:bit",
                            lineno + 1
                        ))
                    })?;
                    let bit: u8 = bit.trim().parse().map_err(|_| {
                        Error::Format(format!("schema line {}: bad bit {bit:?}", lineno + 1))
                    })?;
                    label_map.push((raw.trim().to_string(), bit));
                }
            }
            other => {
                return Err(Error::Format(format!(
                    "schema line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }

    let schema = CsvSchema {
        delimiter,
        has_header,
        bag_id_col: bag_id_col.ok_or_else(|| Error::Format("schema missing bag_id_col".into()))?,
        label_col: label_col.ok_or_else(|| Error::Format("schema missing label_col".into()))?,
        feature_cols: feature_cols
            .ok_or_else(|| Error::Format("schema missing feature_cols".into()))?,
        label_map,
    };
    schema.validate()?;
    Ok(schema)
}

fn parse_usize(s: &str, lineno: usize) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("schema line {}: bad integer {s:?}", lineno + 1)))
}

/// Reads a grouped CSV into a dataset. Bags keep first-appearance order and
/// within-bag row order.
pub fn parse_grouped_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;

    let needed = schema
        .feature_cols
        .end
        .max(schema.bag_id_col + 1)
        .max(schema.label_col + 1);

    // bag id -> position in `order`; preserves first-appearance order
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<(String, u8, Vec<Vec<f64>>)> = Vec::new();

    for (rowno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("csv row {}: {e}", rowno + 1)))?;
        if record.len() < needed {
            return Err(Error::Data(format!(
                "csv row {}: {} columns but schema needs {}",
                rowno + 1,
                record.len(),
                needed
            )));
        }
        let bag_id = record
            .get(schema.bag_id_col)
            .expect("bounds checked")
            .to_string();
        let label = schema.map_label(record.get(schema.label_col).expect("bounds checked"))?;
        let mut features = Vec::with_capacity(schema.feature_cols.len());
        for c in schema.feature_cols.clone() {
            let raw = record.get(c).expect("bounds checked");
            let v: f64 = raw.parse().map_err(|_| {
                Error::Data(format!(
                    "csv row {}: feature column {c} is not a number: {raw:?}",
                    rowno + 1
                ))
            })?;
            features.push(v);
        }

        match index.get(&bag_id) {
            Some(&i) => {
                if order[i].1 != label {
                    return Err(Error::Data(format!(
                        "bag {bag_id} has inconsistent labels across rows"
                    )));
                }
                order[i].2.push(features);
            }
            None => {
                index.insert(bag_id.clone(), order.len());
                order.push((bag_id, label, vec![features]));
            }
        }
    }

    let bags = order
        .into_iter()
        .map(|(id, label, instances)| Bag::new(id, label, instances, None))
        .collect::<Result<Vec<_>>>()?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(name, bags, format!("grouped csv from {}", path.display()))
}
