//! Model snapshot file: line one is a JSON header (format version, extractor
//! variant, L, lambda, seed), followed by one JSON object per named parameter
//! with its shape and row-major values. Values are written in shortest
//! round-trip decimal form, so loading reproduces them bit-exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::tensor::Tensor;

use super::extractor::{Extractor, ExtractorKind};
use super::DsmilParams;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    extractor: String,
    l: usize,
    lambda: f64,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn save_snapshot(params: &DsmilParams, seed: u64, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = Header {
        format_version: FORMAT_VERSION,
        extractor: params.extractor.kind().as_str().to_string(),
        l: params.l(),
        lambda: params.lambda,
        seed,
    };
    writeln!(
        out,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )?;
    for p in params.params() {
        let entry = Entry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            values: p.value.data().to_vec(),
        };
        writeln!(
            out,
            "{}",
            serde_json::to_string(&entry).expect("entry serializes")
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a snapshot, returning the parameters and the seed recorded at save
/// time.
pub fn load_snapshot(path: &Path) -> Result<(DsmilParams, u64)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("snapshot file is empty".into()))??;
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| Error::Format(format!("snapshot header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported snapshot format version {}",
            header.format_version
        )));
    }
    let kind = ExtractorKind::parse(&header.extractor)?;

    let mut entries: HashMap<String, Entry> = HashMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("snapshot line {}: {e}", lineno + 2)))?;
        entries.insert(entry.name.clone(), entry);
    }

    let mut take = |name: &str| -> Result<Parameter> {
        let entry = entries
            .remove(name)
            .ok_or_else(|| Error::Format(format!("snapshot missing parameter {name:?}")))?;
        Ok(Parameter::new(name, Tensor::new(entry.shape, entry.values)?))
    };

    let extractor = match kind {
        ExtractorKind::Identity => Extractor::Identity { dim: header.l },
        ExtractorKind::Mlp => Extractor::Mlp {
            w1: take("mlp_w1")?,
            b1: take("mlp_b1")?,
            w2: take("mlp_w2")?,
            b2: take("mlp_b2")?,
        },
        ExtractorKind::LeNet => Extractor::LeNet {
            conv1_k: take("conv1_k")?,
            conv1_b: take("conv1_b")?,
            conv2_k: take("conv2_k")?,
            conv2_b: take("conv2_b")?,
            fc1_w: take("fc1_w")?,
            fc1_b: take("fc1_b")?,
            fc2_w: take("fc2_w")?,
            fc2_b: take("fc2_b")?,
        },
    };
    let params = DsmilParams {
        w0: take("w0")?,
        wq: take("wq")?,
        wv: take("wv")?,
        w1: take("w1")?,
        lambda: header.lambda,
        extractor,
    };
    if params.extractor.output_dim() != header.l
        || params.w0.value.shape() != [1, header.l]
        || params.wq.value.shape() != [header.l, header.l]
        || params.wv.value.shape() != [header.l, header.l]
        || params.w1.value.shape() != [1, header.l]
    {
        return Err(Error::Format(
            "snapshot parameter shapes disagree with header L".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.lambda) {
        return Err(Error::Format(format!(
            "snapshot lambda {} outside [0,1]",
            params.lambda
        )));
    }
    Ok((params, header.seed))
}
