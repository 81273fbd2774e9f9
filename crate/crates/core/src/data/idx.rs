//! IDX file parsing (the MNIST distribution format).
//!
//! Big-endian headers: magic 0x00000803 for u8 image tensors (count, rows,
//! cols) and 0x00000801 for u8 label vectors. Pixels are scaled to [0, 1].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxFile {
    Images {
        rows: usize,
        cols: usize,
        images: Vec<Vec<f64>>,
    },
    Labels(Vec<u8>),
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let slice = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| Error::Format("idx header truncated".into()))?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4 bytes")))
}

pub fn parse_idx(path: &Path) -> Result<IdxFile> {
    let bytes = fs::read(path)?;
    let magic = read_be_u32(&bytes, 0)?;
    match magic {
        MAGIC_IMAGES => {
            let count = read_be_u32(&bytes, 4)? as usize;
            let rows = read_be_u32(&bytes, 8)? as usize;
            let cols = read_be_u32(&bytes, 12)? as usize;
            let expected = 16 + count * rows * cols;
            if bytes.len() < expected {
                return Err(Error::Format(format!(
                    "idx image payload truncated: {} bytes, header implies {expected}",
                    bytes.len()
                )));
            }
            let mut images = Vec::with_capacity(count);
            for i in 0..count {
                let start = 16 + i * rows * cols;
                let img = bytes[start..start + rows * cols]
                    .iter()
                    .map(|&b| b as f64 / 255.0)
                    .collect();
                images.push(img);
            }
            Ok(IdxFile::Images { rows, cols, images })
        }
        MAGIC_LABELS => {
            let count = read_be_u32(&bytes, 4)? as usize;
            let expected = 8 + count;
            if bytes.len() < expected {
                return Err(Error::Format(format!(
                    "idx label payload truncated: {} bytes, header implies {expected}",
                    bytes.len()
                )));
            }
            Ok(IdxFile::Labels(bytes[8..8 + count].to_vec()))
        }
        other => Err(Error::Format(format!(
            "bad idx magic 0x{other:08x} (expected 0x{MAGIC_IMAGES:08x} or 0x{MAGIC_LABELS:08x})"
        ))),
    }
}

/// Parses an IDX file that must contain images.
pub fn parse_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    match parse_idx(path)? {
        IdxFile::Images { rows, cols, images } => Ok((rows, cols, images)),
        IdxFile::Labels(_) => Err(Error::Format(format!(
            "{} holds labels, expected images",
            path.display()
        ))),
    }
}

/// Parses an IDX file that must contain labels.
pub fn parse_idx_labels(path: &Path) -> Result<Vec<u8>> {
    match parse_idx(path)? {
        IdxFile::Labels(labels) => Ok(labels),
        IdxFile::Images { .. } => Err(Error::Format(format!(
            "{} holds images, expected labels",
            path.display()
        ))),
    }
}
