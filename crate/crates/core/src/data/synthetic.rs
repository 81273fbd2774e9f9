//! Synthetic planted-label bag generator for fast tests: negative instances
//! drawn from N(0, I), positive instances from N(mu, I) with mu = (2, 0, ..., 0).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::{bag_label_from_instances, mnist::draw_bag_size, Bag, Dataset};

pub fn gen_synthetic_bags(
    num_bags: usize,
    dim: usize,
    mean_size: f64,
    pos_instance_rate: f64,
    seed: u64,
) -> Result<Dataset> {
    if dim < 2 {
        return Err(Error::Domain(format!(
            "synthetic bags need dim >= 2, got {dim}"
        )));
    }
    if !(0.0..=1.0).contains(&pos_instance_rate) {
        return Err(Error::Domain(format!(
            "pos_instance_rate must be in [0,1], got {pos_instance_rate}"
        )));
    }
    let mut rng = crate::rng::seeded(seed);
    let bags = (0..num_bags)
        .map(|i| {
            let size = draw_bag_size(&mut rng, mean_size, 2.0);
            let mut instances = Vec::with_capacity(size);
            let mut instance_labels = Vec::with_capacity(size);
            for _ in 0..size {
                let positive = rng.random::<f64>() < pos_instance_rate;
                let mut x: Vec<f64> = (0..dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                if positive {
                    x[0] += 2.0;
                }
                instances.push(x);
                instance_labels.push(u8::from(positive));
            }
            let label = bag_label_from_instances(&instance_labels)?;
            Bag::new(format!("syn{i:05}"), label, instances, Some(instance_labels))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        format!("synthetic-{dim}d"),
        bags,
        format!("planted synthetic: {num_bags} bags, rate {pos_instance_rate}, seed {seed}"),
    )
}
