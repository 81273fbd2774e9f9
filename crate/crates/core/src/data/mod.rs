//! Bag data model and dataset ingestion.
//!
//! A bag is an ordered collection of instance feature vectors with a binary
//! label; instance labels, when known (generated data), are kept only as
//! hidden ground truth for evaluation.

mod bagfile;
mod csv_loader;
mod idx;
mod mnist;
mod synthetic;

pub use bagfile::{read_bags, write_bags};
pub use csv_loader::{parse_grouped_csv, parse_schema_file, CsvSchema};
pub use idx::{parse_idx, parse_idx_images, parse_idx_labels, IdxFile};
pub use mnist::build_mnist_bags;
pub use synthetic::gen_synthetic_bags;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub bag_id: String,
    pub label: u8,
    pub instances: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instance_labels: Option<Vec<u8>>,
}

impl Bag {
    pub fn new(
        bag_id: impl Into<String>,
        label: u8,
        instances: Vec<Vec<f64>>,
        instance_labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let bag_id = bag_id.into();
        if instances.is_empty() {
            return Err(Error::Domain(format!("bag {bag_id} has no instances")));
        }
        let dim = instances[0].len();
        if instances.iter().any(|x| x.len() != dim) {
            return Err(Error::Data(format!(
                "bag {bag_id} has instances of differing dimensionality"
            )));
        }
        if label > 1 {
            return Err(Error::Domain(format!(
                "bag {bag_id} label must be 0 or 1, got {label}"
            )));
        }
        if let Some(ref ls) = instance_labels {
            if ls.len() != instances.len() {
                return Err(Error::Data(format!(
                    "bag {bag_id}: {} instance labels for {} instances",
                    ls.len(),
                    instances.len()
                )));
            }
            if bag_label_from_instances(ls)? != label {
                return Err(Error::Data(format!(
                    "bag {bag_id}: label {label} inconsistent with instance labels"
                )));
            }
        }
        Ok(Bag {
            bag_id,
            label,
            instances,
            instance_labels,
        })
    }

    pub fn size(&self) -> usize {
        self.instances.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.instances[0].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub bags: Vec<Bag>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        bags: Vec<Bag>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let feature_dim = bags.first().map_or(0, |b| b.feature_dim());
        for b in &bags {
            if b.feature_dim() != feature_dim {
                return Err(Error::Data(format!(
                    "bag {} has feature dim {} but dataset uses {}",
                    b.bag_id,
                    b.feature_dim(),
                    feature_dim
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            feature_dim,
            bags,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn num_positive(&self) -> usize {
        self.bags.iter().filter(|b| b.label == 1).count()
    }
}

/// Bag label from instance labels: 1 - prod(1 - y_i), the multi-instance
/// assumption. Equals logical OR for binary labels.
pub fn bag_label_from_instances(labels: &[u8]) -> Result<u8> {
    if labels.is_empty() {
        return Err(Error::Domain("bag label of an empty instance list".into()));
    }
    let mut prod = 1i64;
    for &y in labels {
        if y > 1 {
            return Err(Error::Domain(format!("instance label must be 0/1, got {y}")));
        }
        prod *= 1 - y as i64;
    }
    Ok((1 - prod) as u8)
}
