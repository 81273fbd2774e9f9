//! `dsmil mnist-bags`: build canonical bag files from the MNIST IDX files.
//! Training bags sample the train split; the fixed-size test set samples the
//! test split.

use std::fs;
use std::path::{Path, PathBuf};

use dsmil_core::data::{build_mnist_bags, parse_idx_images, parse_idx_labels, write_bags};
use dsmil_core::error::{Error, Result};
use dsmil_core::rng::derive_seed;

/// Every experiment evaluates on the same number of test bags.
pub const TEST_BAG_COUNT: usize = 1000;

#[derive(Debug, Clone)]
pub struct MnistBagsArgs {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub bags: usize,
    pub mean: f64,
    pub std: f64,
    pub positive_digit: u8,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_mnist_bags(args: &MnistBagsArgs) -> Result<(PathBuf, PathBuf)> {
    let (train_pool, train_pool_labels) =
        load_split(&args.train_images, &args.train_labels, "train")?;
    let (test_pool, test_pool_labels) = load_split(&args.test_images, &args.test_labels, "test")?;
    fs::create_dir_all(&args.out)?;

    let train = build_mnist_bags(
        &train_pool,
        &train_pool_labels,
        args.bags,
        args.mean,
        args.std,
        args.positive_digit,
        args.seed,
        "mnist-train",
    )?;
    let test = build_mnist_bags(
        &test_pool,
        &test_pool_labels,
        TEST_BAG_COUNT,
        args.mean,
        args.std,
        args.positive_digit,
        derive_seed(args.seed, 1),
        "mnist-test",
    )?;

    let train_path = args.out.join("train.bags");
    let test_path = args.out.join("test.bags");
    write_bags(&train, &train_path)?;
    write_bags(&test, &test_path)?;
    Ok((train_path, test_path))
}

fn load_split(images: &Path, labels: &Path, which: &str) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let (_, _, imgs) = parse_idx_images(images)?;
    let lbls = parse_idx_labels(labels)?;
    if imgs.len() != lbls.len() {
        return Err(Error::Data(format!(
            "{which} split: {} images but {} labels",
            imgs.len(),
            lbls.len()
        )));
    }
    Ok((imgs, lbls))
}
