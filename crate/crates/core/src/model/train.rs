//! Per-epoch training loop: one bag per optimizer step, bags visited in a
//! seeded shuffled order.
//!
//! Joint mode backpropagates the loss of the combined score. Alternating
//! mode switches per epoch between the instance stream (loss on the
//! max-pooled score, updating extractor + W0) and the bag stream (loss on
//! the attention-stream score, updating Wq/Wv/W1 with the extractor frozen).

use rand::seq::SliceRandom;

use crate::data::Bag;
use crate::error::{Error, Result};
use crate::optim::Optimizer;
use crate::rng::Rng64;
use crate::tape::Tape;

use super::{forward_bag, mse_loss, DsmilParams, TrainMode::*};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Joint,
    Alternating,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Joint => "joint",
            Alternating => "alternating",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Joint),
            "alternating" => Ok(Alternating),
            other => Err(Error::Usage(format!(
                "unknown training mode {other:?} (expected joint|alternating)"
            ))),
        }
    }
}

/// Runs one epoch and returns the mean per-bag loss. `epoch` selects the
/// phase in alternating mode (even: instance stream, odd: bag stream).
pub fn train_epoch(
    bags: &[Bag],
    params: &mut DsmilParams,
    optimizer: &mut Optimizer,
    mode: TrainMode,
    squash: bool,
    epoch: usize,
    rng: &mut Rng64,
) -> Result<f64> {
    if bags.is_empty() {
        return Err(Error::Domain("train_epoch on an empty dataset".into()));
    }
    let instance_phase = epoch % 2 == 0;
    let mut order: Vec<usize> = (0..bags.len()).collect();
    order.shuffle(rng);

    let mut total_loss = 0.0;
    for &i in &order {
        let bag = &bags[i];
        params.zero_grads();
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &bag.instances, params)?;
        let score = match (mode, instance_phase) {
            (Joint, _) => fwd.vars.c_hat,
            (Alternating, true) => fwd.vars.c_m,
            (Alternating, false) => fwd.vars.c_b,
        };
        let loss = mse_loss(&mut tape, score, bag.label as f64, squash)?;
        total_loss += tape.value(loss).item();
        tape.backward(loss)?;
        fwd.bound.accumulate(&tape, params)?;
        match (mode, instance_phase) {
            (Joint, _) => optimizer.step(&mut params.all_params_mut()),
            (Alternating, true) => optimizer.step(&mut params.instance_stream_params_mut()),
            (Alternating, false) => optimizer.step(&mut params.bag_stream_params_mut()),
        }
    }
    Ok(total_loss / bags.len() as f64)
}
