//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them). Dataset-dependent criteria look
//! under `data/` at the workspace root and report SKIPPED when the files are
//! not installed; everything else is self-contained.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dsmil_core::data::{
    bag_label_from_instances, build_mnist_bags, gen_synthetic_bags, parse_grouped_csv,
    parse_idx_images, parse_idx_labels, parse_schema_file,
};
use dsmil_core::eval::{auc, confusion_metrics};
use dsmil_core::gradcheck::finite_diff_gradcheck;
use dsmil_core::model::{
    forward_bag, mse_loss, score_instance, train_epoch, DsmilParams, ExtractorKind, TrainMode,
};
use dsmil_core::optim::Optimizer;
use dsmil_core::rng::{derive_seed, seeded, Rng64};
use dsmil_core::sigmoid;
use dsmil_core::Tape;

use rand::seq::SliceRandom;
use rand::Rng;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn report(criterion: &str, status: &str, detail: &str) {
    println!("criterion {criterion}: {status} — {detail}");
}

fn random_bag(rng: &mut Rng64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness
// ---------------------------------------------------------------------------
#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let sizes = [1usize, 3, 7];
    let mut worst = 0.0_f64;
    for i in 0..20u64 {
        let n = sizes[i as usize % sizes.len()];
        let mut rng = seeded(9000 + i);
        let (mut params, dim) = if i % 2 == 0 {
            (
                DsmilParams::init(ExtractorKind::Identity, 4, 4, 0.5, &mut rng).unwrap(),
                4,
            )
        } else {
            (
                DsmilParams::init(ExtractorKind::Mlp, 3, 4, 0.5, &mut rng).unwrap(),
                3,
            )
        };
        let bag = random_bag(&mut rng, n, dim);
        let label = (i % 2) as f64;

        params.zero_grads();
        {
            let mut tape = Tape::new();
            let fwd = forward_bag(&mut tape, &bag, &params).unwrap();
            let loss = mse_loss(&mut tape, fwd.vars.c_hat, label, true).unwrap();
            tape.backward(loss).unwrap();
            fwd.bound.accumulate(&tape, &mut params).unwrap();
        }
        let err = finite_diff_gradcheck(
            &mut params,
            1e-5,
            |ps| {
                let mut tape = Tape::new();
                let fwd = forward_bag(&mut tape, &bag, ps).unwrap();
                let loss = mse_loss(&mut tape, fwd.vars.c_hat, label, true).unwrap();
                tape.value(loss).item()
            },
            |ps| ps.all_params_mut(),
        );
        worst = worst.max(err);
    }
    let elapsed = started.elapsed();
    let pass = worst < 1e-4 && elapsed.as_secs() < 30;
    report(
        "1 (gradient correctness)",
        if pass { "PASS" } else { "FAIL" },
        &format!("max rel error {worst:.2e} over 20 bags in {elapsed:.1?} (limits 1e-4, 30s)"),
    );
    assert!(worst < 1e-4, "max rel error {worst}");
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 2. Permutation invariance
// ---------------------------------------------------------------------------
#[test]
fn criterion_2_permutation_invariance() {
    let started = Instant::now();
    let mut rng = seeded(888);
    let params = DsmilParams::init(ExtractorKind::Mlp, 5, 6, 0.5, &mut rng).unwrap();
    let mut worst_rel = 0.0_f64;
    for _ in 0..200 {
        let n = rng.random_range(2..10);
        let bag = random_bag(&mut rng, n, 5);
        let mut tape = Tape::new();
        let base = forward_bag(&mut tape, &bag, &params).unwrap();
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| bag[i].clone()).collect();
            let mut tape2 = Tape::new();
            let out = forward_bag(&mut tape2, &shuffled, &params).unwrap();
            let rel = (out.c_hat - base.c_hat).abs() / base.c_hat.abs().max(1.0);
            worst_rel = worst_rel.max(rel);
            for (j, &i) in perm.iter().enumerate() {
                assert_eq!(out.attention[j], base.attention[i], "attention not permuted");
                assert_eq!(
                    out.instance_scores[j], base.instance_scores[i],
                    "scores not permuted"
                );
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = worst_rel <= 1e-9 && elapsed.as_secs() < 10;
    report(
        "2 (permutation invariance)",
        if pass { "PASS" } else { "FAIL" },
        &format!(
            "1000 permutations, worst relative score drift {worst_rel:.2e} in {elapsed:.1?} (limits 1e-9, 10s)"
        ),
    );
    assert!(worst_rel <= 1e-9, "worst rel drift {worst_rel}");
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 3. O(n) attention
// ---------------------------------------------------------------------------
#[test]
fn criterion_3_linear_attention_cost() {
    let mut rng = seeded(777);
    let params = DsmilParams::init(ExtractorKind::Identity, 8, 8, 0.5, &mut rng).unwrap();
    let mut counts = Vec::new();
    for n in [1usize, 10, 100, 1000] {
        let bag = random_bag(&mut rng, n, 8);
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &bag, &params).unwrap();
        counts.push((n, fwd.attention_ops));
        assert_eq!(
            fwd.attention_ops, n as u64,
            "attention used {} inner products for a bag of {}",
            fwd.attention_ops, n
        );
        assert_eq!(tape.attention_inner_products(), n as u64);
    }
    report(
        "3 (O(n) attention)",
        "PASS",
        &format!("inner-product counts equal bag sizes: {counts:?}"),
    );
}

// ---------------------------------------------------------------------------
// 4. Stream consistency and endpoint identities
// ---------------------------------------------------------------------------
#[test]
fn criterion_4_stream_consistency() {
    let data = gen_synthetic_bags(100, 6, 6.0, 0.2, 4242).unwrap();
    let mut rng = seeded(4243);
    let params = DsmilParams::init(ExtractorKind::Mlp, 6, 8, 0.5, &mut rng).unwrap();
    for bag in &data.bags {
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &bag.instances, &params).unwrap();
        let best = bag
            .instances
            .iter()
            .map(|x| score_instance(x, &params).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(fwd.c_m, best, "bag {}: c_m differs from max standalone", bag.bag_id);
    }
    // endpoint identities on the same bags
    for lambda in [0.0, 1.0] {
        let mut rng_l = seeded(4244);
        let p = DsmilParams::init(ExtractorKind::Mlp, 6, 8, lambda, &mut rng_l).unwrap();
        for bag in data.bags.iter().take(20) {
            let mut tape = Tape::new();
            let fwd = forward_bag(&mut tape, &bag.instances, &p).unwrap();
            if lambda == 0.0 {
                assert_eq!(fwd.c_hat, fwd.c_m);
            } else {
                assert_eq!(fwd.c_hat, fwd.c_b);
            }
        }
    }
    report(
        "4 (stream consistency)",
        "PASS",
        "c_m == max standalone instance score on 100 bags; lambda endpoints exact",
    );
}

// ---------------------------------------------------------------------------
// 5. MUSK1 reproduction (requires the UCI clean1.data file, see README)
// ---------------------------------------------------------------------------
#[test]
fn criterion_5_musk1_reproduction() {
    let musk1 = std::env::var("DSMIL_MUSK1")
        .map(PathBuf::from)
        .unwrap_or_else(|_| workspace_root().join("data/musk1/clean1.data"));
    if !musk1.exists() {
        report(
            "5 (MUSK1 reproduction)",
            "SKIPPED",
            &format!(
                "dataset not present at {} and not fetchable in this environment; \
                 install it (README: MUSK1) to run the full 5x10-fold criterion",
                musk1.display()
            ),
        );
        return;
    }
    let started = Instant::now();
    let schema = parse_schema_file(&workspace_root().join("configs/musk1.schema")).unwrap();
    let dataset = parse_grouped_csv(&musk1, &schema).unwrap();
    assert_eq!(dataset.len(), 92, "MUSK1 has 92 molecules");
    assert_eq!(dataset.num_positive(), 47, "MUSK1 has 47 positive bags");

    let mut config = dsmil_cli::RunConfig::default();
    config.dataset = Some(musk1);
    config.format = dsmil_cli::DataFormat::Csv;
    config.schema = Some(workspace_root().join("configs/musk1.schema"));
    config.extractor = ExtractorKind::Mlp;
    config.seed = 1;
    config.out = std::env::temp_dir().join("dsmil-musk1-acceptance");
    let (record, _) = dsmil_cli::run_cv(&config).unwrap();
    let accuracy = record.report.fold_level["accuracy"].mean;
    let elapsed = started.elapsed();
    let pass = accuracy >= 0.85 && elapsed.as_secs() < 600;
    report(
        "5 (MUSK1 reproduction)",
        if pass { "PASS" } else { "FAIL" },
        &format!(
            "mean accuracy {accuracy:.3} over 5x10 folds in {elapsed:.0?} (limits >=0.85, 10min)"
        ),
    );
    assert!(accuracy >= 0.85, "mean accuracy {accuracy}");
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 6. MNIST-bag reproduction (requires data/mnist, scripts/fetch_mnist.sh)
// ---------------------------------------------------------------------------
struct MnistPool {
    train_images: Vec<Vec<f64>>,
    train_labels: Vec<u8>,
    test_images: Vec<Vec<f64>>,
    test_labels: Vec<u8>,
}

fn load_mnist() -> Option<MnistPool> {
    let dir = workspace_root().join("data/mnist");
    if !dir.join("train-images-idx3-ubyte").exists() {
        return None;
    }
    let (_, _, train_images) = parse_idx_images(&dir.join("train-images-idx3-ubyte")).unwrap();
    let train_labels = parse_idx_labels(&dir.join("train-labels-idx1-ubyte")).unwrap();
    let (_, _, test_images) = parse_idx_images(&dir.join("t10k-images-idx3-ubyte")).unwrap();
    let test_labels = parse_idx_labels(&dir.join("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!(train_images.len(), 60000);
    assert_eq!(test_images.len(), 10000);
    Some(MnistPool {
        train_images,
        train_labels,
        test_images,
        test_labels,
    })
}

fn train_and_auc(
    pool: &MnistPool,
    keep_nth_nine: usize,
    num_bags: usize,
    mean: f64,
    std: f64,
    epochs: usize,
    seed: u64,
) -> f64 {
    // Subsampling the positive digit keeps both bag classes present at large
    // bag sizes, where uniform sampling would make every bag positive.
    let curate = |imgs: &[Vec<f64>], lbls: &[u8]| -> (Vec<Vec<f64>>, Vec<u8>) {
        if keep_nth_nine <= 1 {
            return (imgs.to_vec(), lbls.to_vec());
        }
        let mut out_i = Vec::new();
        let mut out_l = Vec::new();
        let mut nines = 0usize;
        for (img, &l) in imgs.iter().zip(lbls) {
            if l == 9 {
                nines += 1;
                if nines % keep_nth_nine != 0 {
                    continue;
                }
            }
            out_i.push(img.clone());
            out_l.push(l);
        }
        (out_i, out_l)
    };
    let (tr_i, tr_l) = curate(&pool.train_images, &pool.train_labels);
    let (te_i, te_l) = curate(&pool.test_images, &pool.test_labels);

    let train = build_mnist_bags(&tr_i, &tr_l, num_bags, mean, std, 9, seed, "train").unwrap();
    let test =
        build_mnist_bags(&te_i, &te_l, 1000, mean, std, 9, derive_seed(seed, 1), "test").unwrap();

    let mut rng = seeded(derive_seed(seed, 2));
    let mut params = DsmilParams::init(ExtractorKind::LeNet, 784, 64, 0.5, &mut rng).unwrap();
    let mut optimizer = Optimizer::adam(1e-4);
    for epoch in 0..epochs {
        train_epoch(
            &train.bags,
            &mut params,
            &mut optimizer,
            TrainMode::Joint,
            true,
            epoch,
            &mut rng,
        )
        .unwrap();
    }
    let scores: Vec<f64> = test
        .bags
        .iter()
        .map(|b| {
            let mut tape = Tape::new();
            sigmoid(forward_bag(&mut tape, &b.instances, &params).unwrap().c_hat)
        })
        .collect();
    let labels: Vec<u8> = test.bags.iter().map(|b| b.label).collect();
    auc(&scores, &labels).unwrap()
}

#[test]
fn criterion_6_mnist_bag_reproduction() {
    let Some(pool) = load_mnist() else {
        report(
            "6 (MNIST-bag reproduction)",
            "SKIPPED",
            "data/mnist not present; run scripts/fetch_mnist.sh first",
        );
        return;
    };
    let started = Instant::now();

    // Main setting: 100 training bags of size 10±2, 40 epochs, five seeds.
    let aucs: Vec<f64> = (1..=5u64)
        .map(|seed| train_and_auc(&pool, 1, 100, 10.0, 2.0, 40, seed))
        .collect();
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;

    // Smoke settings at reduced epochs: more training bags, larger bags.
    // Large-bag pools are curated (fewer nines) so both classes appear.
    let smoke_300 = train_and_auc(&pool, 1, 300, 10.0, 2.0, 15, 11);
    let smoke_size50 = train_and_auc(&pool, 5, 100, 50.0, 10.0, 8, 12);
    let smoke_size100 = train_and_auc(&pool, 11, 100, 100.0, 20.0, 5, 13);

    let elapsed = started.elapsed();
    let pass = mean_auc >= 0.90
        && smoke_300 >= 0.90
        && smoke_size50 >= 0.90
        && smoke_size100 >= 0.90
        && elapsed.as_secs() < 1800;
    report(
        "6 (MNIST-bag reproduction)",
        if pass { "PASS" } else { "FAIL" },
        &format!(
            "mean AUC {mean_auc:.4} over seeds {aucs:?}; smoke: 300-bag {smoke_300:.3}, \
             size-50 {smoke_size50:.3}, size-100 {smoke_size100:.3}; {elapsed:.0?} \
             (limits >=0.90 each, 30min)"
        ),
    );
    assert!(mean_auc >= 0.90, "mean AUC {mean_auc}, per-seed {aucs:?}");
    assert!(smoke_300 >= 0.90, "300-bag smoke AUC {smoke_300}");
    assert!(smoke_size50 >= 0.90, "size-50 smoke AUC {smoke_size50}");
    assert!(smoke_size100 >= 0.90, "size-100 smoke AUC {smoke_size100}");
    assert!(elapsed.as_secs() < 1800, "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 7. Instance-classifier quality on planted bags
// ---------------------------------------------------------------------------
#[test]
fn criterion_7_instance_classifier_quality() {
    let started = Instant::now();
    let train = gen_synthetic_bags(200, 10, 10.0, 0.1, 77).unwrap();
    let mut rng = seeded(78);
    let mut params = DsmilParams::init(ExtractorKind::Mlp, 10, 64, 0.5, &mut rng).unwrap();
    let mut optimizer = Optimizer::adam(1e-4);
    for epoch in 0..40 {
        train_epoch(
            &train.bags,
            &mut params,
            &mut optimizer,
            TrainMode::Joint,
            true,
            epoch,
            &mut rng,
        )
        .unwrap();
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for bag in &train.bags {
        let hidden = bag.instance_labels.as_ref().unwrap();
        for (instance, &label) in bag.instances.iter().zip(hidden) {
            scores.push(score_instance(instance, &params).unwrap());
            labels.push(label);
        }
    }
    let instance_auc = auc(&scores, &labels).unwrap();
    let elapsed = started.elapsed();
    let pass = instance_auc >= 0.80 && elapsed.as_secs() < 120;
    report(
        "7 (instance classifier)",
        if pass { "PASS" } else { "FAIL" },
        &format!(
            "instance-level AUC {instance_auc:.4} against hidden labels in {elapsed:.1?} \
             (limits >=0.80, 2min)"
        ),
    );
    assert!(instance_auc >= 0.80, "instance AUC {instance_auc}");
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 8. Metric oracles
// ---------------------------------------------------------------------------
fn auc_pairwise_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                credit += 1.0;
            } else if si == sj {
                credit += 0.5;
            }
        }
    }
    credit / pairs
}

#[test]
fn criterion_8_metric_oracles() {
    // auc vs the pairwise-concordance oracle, exactly, on 1000 random cases
    let mut rng = seeded(555);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(2..=30);
        // quantized scores so ties occur regularly
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64 / 8.0).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let pos = labels.iter().filter(|&&l| l == 1).count();
        if pos == 0 || pos == n {
            continue;
        }
        assert_eq!(
            auc(&scores, &labels).unwrap(),
            auc_pairwise_oracle(&scores, &labels),
            "auc disagrees with the pairwise oracle on {scores:?} / {labels:?}"
        );
        checked += 1;
    }

    // confusion metrics vs exhaustive counting for every pair of length <= 12
    let mut cases = 0u64;
    for n in 1..=12usize {
        for assignment in 0..(1u64 << (2 * n)) {
            let mut predictions = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                predictions.push(((assignment >> (2 * i)) & 1) as u8);
                labels.push(((assignment >> (2 * i + 1)) & 1) as u8);
            }
            let m = confusion_metrics(&predictions, &labels).unwrap();
            // independent counting straight from the definitions
            let (mut tp, mut fp, mut r#fn, mut tn) = (0f64, 0f64, 0f64, 0f64);
            for i in 0..n {
                match (predictions[i], labels[i]) {
                    (1, 1) => tp += 1.0,
                    (1, 0) => fp += 1.0,
                    (0, 1) => r#fn += 1.0,
                    _ => tn += 1.0,
                }
            }
            let accuracy = (tp + tn) / n as f64;
            let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let recall = if tp + r#fn == 0.0 { 0.0 } else { tp / (tp + r#fn) };
            let f_score = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            assert_eq!(m.accuracy, accuracy, "{predictions:?}/{labels:?}");
            assert_eq!(m.precision, precision, "{predictions:?}/{labels:?}");
            assert_eq!(m.recall, recall, "{predictions:?}/{labels:?}");
            assert_eq!(m.f_score, f_score, "{predictions:?}/{labels:?}");
            cases += 1;
        }
    }
    report(
        "8 (metric oracles)",
        "PASS",
        &format!("auc exact on 1000 random cases; confusion exact on {cases} exhaustive cases"),
    );
}

// ---------------------------------------------------------------------------
// 9. Bag-label assumption equals logical OR
// ---------------------------------------------------------------------------
#[test]
fn criterion_9_bag_label_equals_or() {
    let mut cases = 0;
    for n in 1..=8usize {
        for mask in 0..(1u32 << n) {
            let labels: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let expected = labels.iter().fold(0, |acc, &y| acc | y);
            assert_eq!(bag_label_from_instances(&labels).unwrap(), expected);
            cases += 1;
        }
    }
    report(
        "9 (bag-label OR equivalence)",
        "PASS",
        &format!("exhaustive over {cases} binary vectors up to length 8"),
    );
}

// ---------------------------------------------------------------------------
// 10. Histopathology tables: out of scope by design
// ---------------------------------------------------------------------------
#[test]
fn criterion_10_out_of_scope_note() {
    report(
        "10 (histopathology)",
        "N/A",
        "requires proprietary image corpora and augmentation pipelines; no criterion covers it",
    );
}
