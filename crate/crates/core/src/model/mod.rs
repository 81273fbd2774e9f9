//! The dual-stream MIL aggregator.
//!
//! Stream one scores every instance with a shared fully connected layer and
//! max-pools; the top-activated instance anchors the second stream, which
//! matches every query against the anchor query (N inner products), softmaxes
//! the scores into attention weights, and classifies the attention-weighted
//! sum of value vectors. The bag score is the convex combination of the two
//! stream scores.

mod baselines;
mod extractor;
mod snapshot;
mod train;

pub use baselines::{baseline_forward, BaselineForward, BaselineKind, BaselineParams};
pub use extractor::{BoundExtractor, Extractor, ExtractorKind, MLP_HIDDEN};
pub use snapshot::{load_snapshot, save_snapshot};
pub use train::{train_epoch, TrainMode};

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::rng::Rng64;
use crate::tape::{Tape, Var};

/// Learnable weights: instance classifier W0, query/value projections Wq/Wv,
/// bag classifier W1, the stream mixing weight lambda, and the extractor.
#[derive(Debug, Clone)]
pub struct DsmilParams {
    pub w0: Parameter,
    pub wq: Parameter,
    pub wv: Parameter,
    pub w1: Parameter,
    pub lambda: f64,
    pub extractor: Extractor,
}

impl DsmilParams {
    pub fn init(
        kind: ExtractorKind,
        input_dim: usize,
        l: usize,
        lambda: f64,
        rng: &mut Rng64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain(format!(
                "lambda must be in [0,1], got {lambda}"
            )));
        }
        let extractor = Extractor::init(kind, input_dim, l, rng)?;
        Ok(DsmilParams {
            w0: extractor::init_weight(rng, "w0", 1, l),
            wq: extractor::init_weight(rng, "wq", l, l),
            wv: extractor::init_weight(rng, "wv", l, l),
            w1: extractor::init_weight(rng, "w1", 1, l),
            lambda,
            extractor,
        })
    }

    /// Embedding width L shared by all four weight matrices.
    pub fn l(&self) -> usize {
        self.w0.value.cols()
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut ps = self.extractor.params();
        ps.extend([&self.w0, &self.wq, &self.wv, &self.w1]);
        ps
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut ps = self.extractor.params_mut();
        ps.extend([&mut self.w0, &mut self.wq, &mut self.wv, &mut self.w1]);
        ps
    }

    /// Parameters updated by the instance (max-pooling) stream phase.
    pub fn instance_stream_params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut ps = self.extractor.params_mut();
        ps.push(&mut self.w0);
        ps
    }

    /// Parameters updated by the bag (attention) stream phase.
    pub fn bag_stream_params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.wq, &mut self.wv, &mut self.w1]
    }

    pub fn zero_grads(&mut self) {
        for p in self.all_params_mut() {
            p.zero_grad();
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDsmil {
        BoundDsmil {
            w0: self.w0.bind(tape),
            wq: self.wq.bind(tape),
            wv: self.wv.bind(tape),
            w1: self.w1.bind(tape),
            extractor: self.extractor.bind(tape),
        }
    }
}

/// Tape handles for one bound parameter set.
#[derive(Debug, Clone)]
pub struct BoundDsmil {
    pub w0: Var,
    pub wq: Var,
    pub wv: Var,
    pub w1: Var,
    pub extractor: BoundExtractor,
}

impl BoundDsmil {
    /// Adds the tape gradients into the owning parameter set.
    pub fn accumulate(&self, tape: &Tape, params: &mut DsmilParams) -> Result<()> {
        params.w0.accumulate_grad(tape.grad(self.w0)?);
        params.wq.accumulate_grad(tape.grad(self.wq)?);
        params.wv.accumulate_grad(tape.grad(self.wv)?);
        params.w1.accumulate_grad(tape.grad(self.w1)?);
        self.extractor.accumulate(tape, &mut params.extractor)
    }
}

/// Tape handles to the interesting nodes of one bag forward pass.
#[derive(Debug, Clone)]
pub struct BagVars {
    pub instance_scores: Var,
    pub c_m: Var,
    pub c_b: Var,
    pub c_hat: Var,
    pub attention: Var,
    pub bag_embedding: Var,
}

/// Forward result for one bag: both stream scores, the combined score, the
/// attention vector, per-instance scores and the top-activated index.
#[derive(Debug, Clone)]
pub struct BagForward {
    pub c_m: f64,
    pub c_b: f64,
    pub c_hat: f64,
    pub m_index: usize,
    pub attention: Vec<f64>,
    pub instance_scores: Vec<f64>,
    pub bag_embedding: Vec<f64>,
    /// Inner products evaluated by the attention op for this bag (== N).
    pub attention_ops: u64,
    pub vars: BagVars,
    pub bound: BoundDsmil,
}

/// Exact convex combination of the two stream scores.
pub fn dual_combine(c_m: f64, c_b: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!(
            "lambda must be in [0,1], got {lambda}"
        )));
    }
    Ok((1.0 - lambda) * c_m + lambda * c_b)
}

/// Runs the full dual-stream forward pass over one bag.
pub fn forward_bag(
    tape: &mut Tape,
    instances: &[Vec<f64>],
    params: &DsmilParams,
) -> Result<BagForward> {
    if instances.is_empty() {
        return Err(Error::Domain("forward_bag on an empty bag".into()));
    }
    let ops_before = tape.attention_inner_products();
    let bound = params.bind(tape);

    let columns = instances
        .iter()
        .map(|x| bound.extractor.embed(tape, x))
        .collect::<Result<Vec<_>>>()?;
    let h = tape.concat_cols(&columns)?;

    let n = instances.len();
    let scores_row = tape.matmul(bound.w0, h)?; // [1, N]
    let instance_scores = tape.reshape(scores_row, vec![n])?;
    let (c_m, m_index) = tape.reduce_max_with_index(instance_scores)?;

    let q = tape.matmul(bound.wq, h)?;
    let v = tape.matmul(bound.wv, h)?;
    let s = tape.attention_scores(q, m_index)?;
    let attention = tape.softmax(s)?;
    let bag_embedding = tape.weighted_sum(v, attention)?;
    let c_b = tape.linear(bound.w1, bag_embedding, None)?;
    let c_hat = tape.lin_comb(c_m, c_b, 1.0 - params.lambda, params.lambda)?;

    Ok(BagForward {
        c_m: tape.value(c_m).item(),
        c_b: tape.value(c_b).item(),
        c_hat: tape.value(c_hat).item(),
        m_index,
        attention: tape.value(attention).data().to_vec(),
        instance_scores: tape.value(instance_scores).data().to_vec(),
        bag_embedding: tape.value(bag_embedding).data().to_vec(),
        attention_ops: tape.attention_inner_products() - ops_before,
        vars: BagVars {
            instance_scores,
            c_m,
            c_b,
            c_hat,
            attention,
            bag_embedding,
        },
        bound,
    })
}

/// Squared error against a binary bag label, by default on the squashed
/// score so the unbounded logit is compared against a bounded target.
pub fn mse_loss(tape: &mut Tape, score: Var, label: f64, squash: bool) -> Result<Var> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::Domain(format!(
            "bag label must be 0 or 1, got {label}"
        )));
    }
    let prediction = if squash { tape.sigmoid(score) } else { score };
    let residual = tape.add_scalar(prediction, -label);
    tape.mul(residual, residual)
}

/// The max-pooling stream applied to a single instance: W0 * extract(x).
/// Bit-identical to the corresponding entry of a bag's instance scores.
pub fn score_instance(instance: &[f64], params: &DsmilParams) -> Result<f64> {
    let mut tape = Tape::new();
    let w0 = params.w0.bind(&mut tape);
    let bound = params.extractor.bind(&mut tape);
    let h = bound.embed(&mut tape, instance)?;
    let s = tape.linear(w0, h, None)?;
    Ok(tape.value(s).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn small_params(l: usize, lambda: f64, seed: u64) -> DsmilParams {
        let mut rng = seeded(seed);
        DsmilParams::init(ExtractorKind::Identity, l, l, lambda, &mut rng).unwrap()
    }

    fn matvec(w: &crate::tensor::Tensor, x: &[f64]) -> Vec<f64> {
        let (m, k) = (w.rows(), w.cols());
        (0..m)
            .map(|r| (0..k).map(|c| w.data()[r * k + c] * x[c]).sum())
            .collect()
    }

    #[test]
    fn singleton_bag_composition() {
        let params = small_params(3, 0.5, 7);
        let x = vec![0.4, -1.2, 2.0];
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &[x.clone()], &params).unwrap();

        assert_eq!(fwd.attention, vec![1.0]);
        assert_eq!(fwd.m_index, 0);

        let expected_cm = matvec(&params.w0.value, &x)[0];
        assert_eq!(fwd.c_m, expected_cm);

        let v = matvec(&params.wv.value, &x);
        let expected_cb = matvec(&params.w1.value, &v)[0];
        assert_eq!(fwd.c_b, expected_cb);
        assert_eq!(
            fwd.c_hat,
            dual_combine(expected_cm, expected_cb, 0.5).unwrap()
        );
    }

    #[test]
    fn duplicated_instance_halves_attention() {
        let params = small_params(4, 0.3, 11);
        let x = vec![0.9, 0.1, -0.4, 0.7];
        let mut tape = Tape::new();
        let pair = forward_bag(&mut tape, &[x.clone(), x.clone()], &params).unwrap();
        assert_eq!(pair.attention, vec![0.5, 0.5]);

        let mut tape1 = Tape::new();
        let single = forward_bag(&mut tape1, &[x], &params).unwrap();
        assert!((pair.c_hat - single.c_hat).abs() < 1e-12);
    }

    #[test]
    fn empty_bag_is_domain_error() {
        let params = small_params(3, 0.5, 1);
        let mut tape = Tape::new();
        assert!(matches!(
            forward_bag(&mut tape, &[], &params),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dual_combine_endpoints_and_midpoint() {
        assert_eq!(dual_combine(0.2, 0.6, 0.0).unwrap(), 0.2);
        assert_eq!(dual_combine(0.2, 0.6, 1.0).unwrap(), 0.6);
        assert_eq!(dual_combine(0.2, 0.6, 0.5).unwrap(), 0.4);
        assert!(dual_combine(0.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn lambda_endpoints_hold_exactly_through_the_graph() {
        for (lambda, pick_cm) in [(0.0, true), (1.0, false)] {
            let params = small_params(5, lambda, 23);
            let instances: Vec<Vec<f64>> = (0..4)
                .map(|i| (0..5).map(|j| ((i * 5 + j) as f64).sin()).collect())
                .collect();
            let mut tape = Tape::new();
            let fwd = forward_bag(&mut tape, &instances, &params).unwrap();
            if pick_cm {
                assert_eq!(fwd.c_hat, fwd.c_m);
            } else {
                assert_eq!(fwd.c_hat, fwd.c_b);
            }
        }
    }

    #[test]
    fn mse_loss_cases() {
        let mut tape = Tape::new();
        let zero = tape.scalar(0.0);
        let loss = mse_loss(&mut tape, zero, 1.0, true).unwrap();
        assert!((tape.value(loss).item() - 0.25).abs() < 1e-15);

        let mut tape2 = Tape::new();
        let s = tape2.scalar(0.0);
        assert!(mse_loss(&mut tape2, s, 0.5, true).is_err());
    }

    #[test]
    fn mse_loss_zero_at_perfect_prediction_without_squash() {
        let mut tape = Tape::new();
        let one = tape.scalar(1.0);
        let loss = mse_loss(&mut tape, one, 1.0, false).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn score_instance_matches_in_bag_scores_exactly() {
        let mut rng = seeded(3);
        let params = DsmilParams::init(ExtractorKind::Mlp, 6, 4, 0.5, &mut rng).unwrap();
        let instances: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..6).map(|j| ((i * 7 + j) as f64 * 0.37).cos()).collect())
            .collect();
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &instances, &params).unwrap();
        for (i, x) in instances.iter().enumerate() {
            assert_eq!(
                score_instance(x, &params).unwrap(),
                fwd.instance_scores[i],
                "instance {i}"
            );
        }
        // zero W0 forces zero scores
        let mut zeroed = params.clone();
        zeroed.w0.value.data_mut().fill(0.0);
        assert_eq!(score_instance(&instances[0], &zeroed).unwrap(), 0.0);
    }

    #[test]
    fn max_pool_stream_ignores_dominated_appended_instance() {
        let mut params = small_params(3, 0.5, 13);
        params.w0.value.data_mut().copy_from_slice(&[1.0, 0.0, 0.0]);
        let a = vec![1.0, 0.0, 0.0]; // score 1
        let b = vec![0.0, 1.0, 0.0]; // score 0
        let c = vec![-1.0, 0.0, 0.0]; // score -1, below the current max
        let mut tape = Tape::new();
        let two = forward_bag(&mut tape, &[a.clone(), b.clone()], &params).unwrap();
        let mut tape3 = Tape::new();
        let three = forward_bag(&mut tape3, &[a, b, c], &params).unwrap();
        assert_eq!(three.c_m, two.c_m);
        assert_eq!(three.m_index, two.m_index);
    }

    #[test]
    fn w0_coordinate_projection_scores_first_coordinates() {
        let mut params = small_params(3, 0.5, 19);
        params.w0.value.data_mut().copy_from_slice(&[1.0, 0.0, 0.0]);
        let instances = vec![vec![0.7, 9.0, -3.0], vec![-1.25, 4.0, 2.0]];
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &instances, &params).unwrap();
        assert_eq!(fwd.instance_scores, vec![0.7, -1.25]);
    }

    #[test]
    fn zero_value_projection_zeroes_the_bag_stream() {
        let mut params = small_params(4, 1.0, 31);
        params.wv.value.data_mut().fill(0.0);
        let instances = vec![vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.5, 0.0, 2.0]];
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &instances, &params).unwrap();
        assert_eq!(fwd.bag_embedding, vec![0.0; 4]);
        assert_eq!(fwd.c_b, 0.0);
        assert_eq!(fwd.c_hat, 0.0); // lambda = 1 picks the bag stream
    }

    #[test]
    fn attention_ops_equal_bag_size() {
        let params = small_params(4, 0.5, 5);
        for n in [1usize, 3, 17] {
            let instances: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..4).map(|j| ((i + j) as f64).sin()).collect())
                .collect();
            let mut tape = Tape::new();
            let fwd = forward_bag(&mut tape, &instances, &params).unwrap();
            assert_eq!(fwd.attention_ops, n as u64);
        }
    }

    #[test]
    fn bag_embedding_shape_is_independent_of_bag_size() {
        let params = small_params(6, 0.5, 17);
        for n in [1usize, 2, 17, 256] {
            let instances: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..6).map(|j| ((i * 3 + j) as f64 * 0.11).sin()).collect())
                .collect();
            let mut tape = Tape::new();
            let fwd = forward_bag(&mut tape, &instances, &params).unwrap();
            assert_eq!(fwd.bag_embedding.len(), 6);
            assert!((fwd.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_queries_give_closed_form_attention() {
        // Identity extractor and Wq = I: queries equal the orthonormal inputs.
        let mut params = small_params(4, 0.5, 29);
        let eye: Vec<f64> = (0..16)
            .map(|i| if i % 5 == 0 { 1.0 } else { 0.0 })
            .collect();
        params.wq.value.data_mut().copy_from_slice(&eye);
        // W0 picks coordinate 0 so instance 0 is the top activation.
        params.w0.value.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);

        let n = 4;
        let instances: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut tape = Tape::new();
        let fwd = forward_bag(&mut tape, &instances, &params).unwrap();
        assert_eq!(fwd.m_index, 0);
        let e = std::f64::consts::E;
        let expected = e / (e + (n as f64 - 1.0));
        assert!((fwd.attention[0] - expected).abs() < 1e-12);
    }
}
