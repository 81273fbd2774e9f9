//! Baseline MIL aggregators from the comparison tables: instance-space
//! max/mean pooling, embedding-space max/mean pooling, and the tanh-attention
//! pooling operator (plain and gated).

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::rng::Rng64;
use crate::tape::{Tape, Var};

use super::extractor::{init_weight, Extractor, ExtractorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    InstanceMax,
    InstanceMean,
    EmbedMax,
    EmbedMean,
    Abmilp,
    AbmilpGated,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::InstanceMax => "instance_max",
            BaselineKind::InstanceMean => "instance_mean",
            BaselineKind::EmbedMax => "embed_max",
            BaselineKind::EmbedMean => "embed_mean",
            BaselineKind::Abmilp => "abmilp",
            BaselineKind::AbmilpGated => "abmilp_gated",
        }
    }

    fn uses_attention(&self) -> bool {
        matches!(self, BaselineKind::Abmilp | BaselineKind::AbmilpGated)
    }
}

/// Hidden width of the attention scoring network.
pub const ATTN_HIDDEN: usize = 64;

#[derive(Debug, Clone)]
pub struct BaselineParams {
    pub kind: BaselineKind,
    pub extractor: Extractor,
    /// Shared 1xL classifier applied to a single score/embedding.
    pub classifier: Parameter,
    /// Tanh arm U [D, L]; attention baselines only.
    pub attn_u: Option<Parameter>,
    /// Score vector w [1, D]; attention baselines only.
    pub attn_w: Option<Parameter>,
    /// Gate G [D, L]; gated variant only.
    pub attn_gate: Option<Parameter>,
}

impl BaselineParams {
    pub fn init(
        kind: BaselineKind,
        extractor_kind: ExtractorKind,
        input_dim: usize,
        l: usize,
        rng: &mut Rng64,
    ) -> Result<Self> {
        let extractor = Extractor::init(extractor_kind, input_dim, l, rng)?;
        let classifier = init_weight(rng, "cls", 1, l);
        let (attn_u, attn_w, attn_gate) = if kind.uses_attention() {
            let u = Some(init_weight(rng, "attn_u", ATTN_HIDDEN, l));
            let w = Some(init_weight(rng, "attn_w", 1, ATTN_HIDDEN));
            let gate = matches!(kind, BaselineKind::AbmilpGated)
                .then(|| init_weight(rng, "attn_gate", ATTN_HIDDEN, l));
            (u, w, gate)
        } else {
            (None, None, None)
        };
        Ok(BaselineParams {
            kind,
            extractor,
            classifier,
            attn_u,
            attn_w,
            attn_gate,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BaselineForward {
    pub score: f64,
    /// Attention weights for the attention baselines, None otherwise.
    pub attention: Option<Vec<f64>>,
    pub score_var: Var,
}

/// Scores one bag with the selected baseline aggregator.
pub fn baseline_forward(
    tape: &mut Tape,
    instances: &[Vec<f64>],
    params: &BaselineParams,
) -> Result<BaselineForward> {
    if instances.is_empty() {
        return Err(Error::Domain("baseline_forward on an empty bag".into()));
    }
    let bound_ext = params.extractor.bind(tape);
    let cls = params.classifier.bind(tape);
    let columns = instances
        .iter()
        .map(|x| bound_ext.embed(tape, x))
        .collect::<Result<Vec<_>>>()?;
    let h = tape.concat_cols(&columns)?;
    let n = instances.len();

    let (score_var, attention) = match params.kind {
        BaselineKind::InstanceMax => {
            let scores_row = tape.matmul(cls, h)?;
            let scores = tape.reshape(scores_row, vec![n])?;
            let (max, _) = tape.reduce_max_with_index(scores)?;
            (max, None)
        }
        BaselineKind::InstanceMean => {
            let scores_row = tape.matmul(cls, h)?;
            let mean = tape.row_mean(scores_row)?;
            (mean, None)
        }
        BaselineKind::EmbedMax => {
            let pooled = tape.row_max(h)?;
            (tape.linear(cls, pooled, None)?, None)
        }
        BaselineKind::EmbedMean => {
            let pooled = tape.row_mean(h)?;
            (tape.linear(cls, pooled, None)?, None)
        }
        BaselineKind::Abmilp | BaselineKind::AbmilpGated => {
            let u = params
                .attn_u
                .as_ref()
                .ok_or_else(|| Error::Usage("attention baseline without U weights".into()))?
                .bind(tape);
            let w = params
                .attn_w
                .as_ref()
                .ok_or_else(|| Error::Usage("attention baseline without w weights".into()))?
                .bind(tape);
            let pre = tape.matmul(u, h)?; // [D, N]
            let mut arm = tape.tanh(pre);
            if params.kind == BaselineKind::AbmilpGated {
                let g = params
                    .attn_gate
                    .as_ref()
                    .ok_or_else(|| Error::Usage("gated baseline without gate weights".into()))?
                    .bind(tape);
                let gated = tape.matmul(g, h)?;
                let gated = tape.sigmoid(gated);
                arm = tape.mul(arm, gated)?;
            }
            let logits_row = tape.matmul(w, arm)?; // [1, N]
            let logits = tape.reshape(logits_row, vec![n])?;
            let attention = tape.softmax(logits)?;
            let pooled = tape.weighted_sum(h, attention)?;
            let score = tape.linear(cls, pooled, None)?;
            (score, Some(tape.value(attention).data().to_vec()))
        }
    };

    Ok(BaselineForward {
        score: tape.value(score_var).item(),
        attention,
        score_var,
    })
}
