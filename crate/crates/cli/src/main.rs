//! `dsmil`: train, cross-validate and report on multiple-instance datasets.
//!
//! Exit codes: 0 success, 2 usage/config/data error, 1 internal failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsmil_cli::commands;
use dsmil_cli::config::{DataFormat, OptimizerKind, RunConfig};
use dsmil_core::model::{ExtractorKind, TrainMode};

#[derive(Parser)]
#[command(
    name = "dsmil",
    version,
    about = "Dual-stream max-self-attention multiple-instance learning harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonOpts {
    /// Key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for snapshots, logs and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Mixing weight between the two stream scores, in [0,1].
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// joint | alternating
    #[arg(long)]
    mode: Option<String>,
    /// identity | mlp | lenet
    #[arg(long)]
    extractor: Option<String>,
    /// csv | bags
    #[arg(long)]
    format: Option<String>,
    /// CsvSchema description file (csv format only).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Embedding width L (ignored by the identity extractor).
    #[arg(long)]
    l: Option<usize>,
    /// adam | sgd
    #[arg(long)]
    optimizer: Option<String>,
    /// Compare the raw combined score against the label without squashing.
    #[arg(long)]
    no_squash: bool,
    /// Row label used by `report`.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the full dataset; writes model.snapshot and train_log.txt.
    Train {
        dataset: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Repeated k-fold cross-validation; writes report.json.
    Cv {
        dataset: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build MNIST-bag train/test files from IDX inputs.
    MnistBags {
        #[arg(long)]
        train_images: PathBuf,
        #[arg(long)]
        train_labels: PathBuf,
        #[arg(long)]
        test_images: PathBuf,
        #[arg(long)]
        test_labels: PathBuf,
        /// Number of training bags.
        #[arg(long)]
        bags: usize,
        /// Mean bag size.
        #[arg(long)]
        mean: f64,
        /// Bag size standard deviation.
        #[arg(long, default_value_t = 2.0)]
        std: f64,
        /// The digit treated as the positive class.
        #[arg(long, default_value_t = 9)]
        digit: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every instance of a bag file with the instance classifier.
    ScoreInstances {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        bags: PathBuf,
    },
    /// Format one or more report.json files as a comparison table.
    Report {
        files: Vec<PathBuf>,
        /// Also write report.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build_config(
    dataset: Option<PathBuf>,
    common: &CommonOpts,
) -> dsmil_core::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = dataset {
        config.dataset = Some(d);
    }
    if let Some(v) = common.seed {
        config.seed = v;
    }
    if let Some(v) = &common.out {
        config.out = v.clone();
    }
    if let Some(v) = common.lambda {
        config.lambda = v;
    }
    if let Some(v) = common.lr {
        config.lr = v;
    }
    if let Some(v) = common.epochs {
        config.epochs = v;
    }
    if let Some(v) = common.folds {
        config.folds = v;
    }
    if let Some(v) = common.repeats {
        config.repeats = v;
    }
    if let Some(v) = &common.mode {
        config.mode = TrainMode::parse(v)?;
    }
    if let Some(v) = &common.extractor {
        config.extractor = ExtractorKind::parse(v)?;
    }
    if let Some(v) = &common.format {
        config.format = DataFormat::parse(v)?;
    }
    if let Some(v) = &common.schema {
        config.schema = Some(v.clone());
    }
    if let Some(v) = common.l {
        config.l = v;
    }
    if let Some(v) = &common.optimizer {
        config.optimizer = OptimizerKind::parse(v)?;
    }
    if common.no_squash {
        config.squash = false;
    }
    if let Some(v) = &common.label {
        config.label = Some(v.clone());
    }
    Ok(config)
}

fn run() -> dsmil_core::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { dataset, common } => {
            let config = build_config(dataset, &common)?;
            let artifacts = commands::run_train(&config)?;
            eprintln!(
                "trained {} epochs; snapshot {}",
                artifacts.losses.len(),
                artifacts.snapshot_path.display()
            );
        }
        Command::Cv { dataset, common } => {
            let config = build_config(dataset, &common)?;
            let (record, path) = commands::run_cv(&config)?;
            eprintln!(
                "cv finished in {:.1}s; report {}",
                record.wall_clock_secs,
                path.display()
            );
            let tables = commands::run_report(&[path.as_path()])?;
            print!("{}", tables.text);
        }
        Command::MnistBags {
            train_images,
            train_labels,
            test_images,
            test_labels,
            bags,
            mean,
            std,
            digit,
            seed,
            out,
        } => {
            let args = commands::MnistBagsArgs {
                train_images,
                train_labels,
                test_images,
                test_labels,
                bags,
                mean,
                std,
                positive_digit: digit,
                seed,
                out,
            };
            let (train, test) = commands::run_mnist_bags(&args)?;
            eprintln!("wrote {} and {}", train.display(), test.display());
        }
        Command::ScoreInstances { snapshot, bags } => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            commands::run_score_instances(&snapshot, &bags, &mut lock)?;
        }
        Command::Report { files, out } => {
            let paths: Vec<&std::path::Path> = files.iter().map(|p| p.as_path()).collect();
            let tables = commands::run_report(&paths)?;
            print!("{}", tables.text);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.csv"), &tables.csv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Every library error is a usage/config/data problem (exit 2); anything
    // that panics is an internal failure (exit 1).
    match std::panic::catch_unwind(run) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(1)
        }
    }
}
