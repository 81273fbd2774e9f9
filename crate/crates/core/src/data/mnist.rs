//! MNIST-bag construction: bags of digit images where a bag is positive iff
//! it contains at least one instance of the positive digit.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::Rng64;

use super::{bag_label_from_instances, Bag, Dataset};

/// Samples `num_bags` bags from an image pool. Bag sizes are drawn from
/// Normal(mean_size, std_size), rounded and clamped to at least one instance;
/// instances are drawn uniformly with replacement.
#[allow(clippy::too_many_arguments)]
pub fn build_mnist_bags(
    images: &[Vec<f64>],
    labels: &[u8],
    num_bags: usize,
    mean_size: f64,
    std_size: f64,
    positive_digit: u8,
    seed: u64,
    name: &str,
) -> Result<Dataset> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::Domain(format!(
            "image pool has {} images and {} labels",
            images.len(),
            labels.len()
        )));
    }
    if mean_size < 1.0 {
        return Err(Error::Domain(format!(
            "mean bag size must be >= 1, got {mean_size}"
        )));
    }
    let mut rng = crate::rng::seeded(seed);
    let bags = (0..num_bags)
        .map(|i| {
            let size = draw_bag_size(&mut rng, mean_size, std_size);
            let mut instances = Vec::with_capacity(size);
            let mut instance_labels = Vec::with_capacity(size);
            for _ in 0..size {
                let idx = rng.random_range(0..images.len());
                instances.push(images[idx].clone());
                instance_labels.push(u8::from(labels[idx] == positive_digit));
            }
            let label = bag_label_from_instances(&instance_labels)?;
            Bag::new(format!("bag{i:05}"), label, instances, Some(instance_labels))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        name,
        bags,
        format!(
            "mnist bags: {num_bags} bags, size {mean_size}+/-{std_size}, digit {positive_digit}, seed {seed}"
        ),
    )
}

pub(super) fn draw_bag_size(rng: &mut Rng64, mean: f64, std: f64) -> usize {
    if std == 0.0 {
        return (mean.round() as i64).max(1) as usize;
    }
    let normal = Normal::new(mean, std).expect("validated parameters");
    let draw: f64 = normal.sample(rng);
    (draw.round() as i64).max(1) as usize
}
