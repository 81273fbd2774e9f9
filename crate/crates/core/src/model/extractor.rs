//! Instance feature extractors: identity passthrough for pre-extracted
//! vectors, a small MLP for vector datasets, and a LeNet-style conv stack
//! for 28x28 digit images.

use rand::Rng;

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::rng::Rng64;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Architecture selector used by configs and snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorKind {
    Identity,
    Mlp,
    LeNet,
}

impl ExtractorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExtractorKind::Identity => "identity",
            ExtractorKind::Mlp => "mlp",
            ExtractorKind::LeNet => "lenet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(ExtractorKind::Identity),
            "mlp" => Ok(ExtractorKind::Mlp),
            "lenet" => Ok(ExtractorKind::LeNet),
            other => Err(Error::Usage(format!(
                "unknown extractor {other:?} (expected identity|mlp|lenet)"
            ))),
        }
    }
}

/// Hidden width of the vector-dataset MLP extractor.
pub const MLP_HIDDEN: usize = 128;

/// LeNet-style stack for 28x28 inputs: two conv+pool stages then two dense
/// layers down to the embedding width.
const LENET_SIDE: usize = 28;
const LENET_C1: usize = 6;
const LENET_C2: usize = 16;
const LENET_K: usize = 5;
const LENET_FLAT: usize = LENET_C2 * 4 * 4; // 28 -> 24 -> 12 -> 8 -> 4
const LENET_FC1: usize = 120;

#[derive(Debug, Clone)]
pub enum Extractor {
    Identity {
        dim: usize,
    },
    Mlp {
        w1: Parameter,
        b1: Parameter,
        w2: Parameter,
        b2: Parameter,
    },
    LeNet {
        conv1_k: Parameter,
        conv1_b: Parameter,
        conv2_k: Parameter,
        conv2_b: Parameter,
        fc1_w: Parameter,
        fc1_b: Parameter,
        fc2_w: Parameter,
        fc2_b: Parameter,
    },
}

fn uniform_init(rng: &mut Rng64, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("sized above")
}

pub(crate) fn init_weight(rng: &mut Rng64, name: &str, rows: usize, cols: usize) -> Parameter {
    Parameter::new(name, uniform_init(rng, vec![rows, cols], cols))
}

impl Extractor {
    pub fn init(kind: ExtractorKind, input_dim: usize, l: usize, rng: &mut Rng64) -> Result<Self> {
        match kind {
            ExtractorKind::Identity => {
                if input_dim != l {
                    return Err(Error::dimension("identity extractor", &[input_dim], &[l]));
                }
                Ok(Extractor::Identity { dim: l })
            }
            ExtractorKind::Mlp => Ok(Extractor::Mlp {
                w1: init_weight(rng, "mlp_w1", MLP_HIDDEN, input_dim),
                b1: Parameter::new("mlp_b1", Tensor::zeros(vec![MLP_HIDDEN])),
                w2: init_weight(rng, "mlp_w2", l, MLP_HIDDEN),
                b2: Parameter::new("mlp_b2", Tensor::zeros(vec![l])),
            }),
            ExtractorKind::LeNet => {
                if input_dim != LENET_SIDE * LENET_SIDE {
                    return Err(Error::dimension(
                        "lenet extractor",
                        &[input_dim],
                        &[LENET_SIDE * LENET_SIDE],
                    ));
                }
                Ok(Extractor::LeNet {
                    conv1_k: Parameter::new(
                        "conv1_k",
                        uniform_init(rng, vec![LENET_C1, 1, LENET_K, LENET_K], LENET_K * LENET_K),
                    ),
                    conv1_b: Parameter::new("conv1_b", Tensor::zeros(vec![LENET_C1])),
                    conv2_k: Parameter::new(
                        "conv2_k",
                        uniform_init(
                            rng,
                            vec![LENET_C2, LENET_C1, LENET_K, LENET_K],
                            LENET_C1 * LENET_K * LENET_K,
                        ),
                    ),
                    conv2_b: Parameter::new("conv2_b", Tensor::zeros(vec![LENET_C2])),
                    fc1_w: init_weight(rng, "fc1_w", LENET_FC1, LENET_FLAT),
                    fc1_b: Parameter::new("fc1_b", Tensor::zeros(vec![LENET_FC1])),
                    fc2_w: init_weight(rng, "fc2_w", l, LENET_FC1),
                    fc2_b: Parameter::new("fc2_b", Tensor::zeros(vec![l])),
                })
            }
        }
    }

    pub fn kind(&self) -> ExtractorKind {
        match self {
            Extractor::Identity { .. } => ExtractorKind::Identity,
            Extractor::Mlp { .. } => ExtractorKind::Mlp,
            Extractor::LeNet { .. } => ExtractorKind::LeNet,
        }
    }

    /// Embedding width L.
    pub fn output_dim(&self) -> usize {
        match self {
            Extractor::Identity { dim } => *dim,
            Extractor::Mlp { w2, .. } => w2.value.rows(),
            Extractor::LeNet { fc2_w, .. } => fc2_w.value.rows(),
        }
    }

    /// Raw instance dimensionality this extractor accepts.
    pub fn input_dim(&self) -> usize {
        match self {
            Extractor::Identity { dim } => *dim,
            Extractor::Mlp { w1, .. } => w1.value.cols(),
            Extractor::LeNet { .. } => LENET_SIDE * LENET_SIDE,
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        match self {
            Extractor::Identity { .. } => vec![],
            Extractor::Mlp { w1, b1, w2, b2 } => vec![w1, b1, w2, b2],
            Extractor::LeNet {
                conv1_k,
                conv1_b,
                conv2_k,
                conv2_b,
                fc1_w,
                fc1_b,
                fc2_w,
                fc2_b,
            } => vec![conv1_k, conv1_b, conv2_k, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Extractor::Identity { .. } => vec![],
            Extractor::Mlp { w1, b1, w2, b2 } => vec![w1, b1, w2, b2],
            Extractor::LeNet {
                conv1_k,
                conv1_b,
                conv2_k,
                conv2_b,
                fc1_w,
                fc1_b,
                fc2_w,
                fc2_b,
            } => vec![conv1_k, conv1_b, conv2_k, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b],
        }
    }

    /// Copies parameter values onto the tape once, so every instance of a bag
    /// reuses the same leaves.
    pub fn bind(&self, tape: &mut Tape) -> BoundExtractor {
        match self {
            Extractor::Identity { dim } => BoundExtractor::Identity { dim: *dim },
            Extractor::Mlp { w1, b1, w2, b2 } => BoundExtractor::Mlp {
                w1: w1.bind(tape),
                b1: b1.bind(tape),
                w2: w2.bind(tape),
                b2: b2.bind(tape),
            },
            Extractor::LeNet {
                conv1_k,
                conv1_b,
                conv2_k,
                conv2_b,
                fc1_w,
                fc1_b,
                fc2_w,
                fc2_b,
            } => BoundExtractor::LeNet {
                conv1_k: conv1_k.bind(tape),
                conv1_b: conv1_b.bind(tape),
                conv2_k: conv2_k.bind(tape),
                conv2_b: conv2_b.bind(tape),
                fc1_w: fc1_w.bind(tape),
                fc1_b: fc1_b.bind(tape),
                fc2_w: fc2_w.bind(tape),
                fc2_b: fc2_b.bind(tape),
            },
        }
    }
}

/// Tape handles for one bound extractor.
#[derive(Debug, Clone)]
pub enum BoundExtractor {
    Identity {
        dim: usize,
    },
    Mlp {
        w1: Var,
        b1: Var,
        w2: Var,
        b2: Var,
    },
    LeNet {
        conv1_k: Var,
        conv1_b: Var,
        conv2_k: Var,
        conv2_b: Var,
        fc1_w: Var,
        fc1_b: Var,
        fc2_w: Var,
        fc2_b: Var,
    },
}

impl BoundExtractor {
    /// Maps one raw instance to its embedding column h in R^L.
    pub fn embed(&self, tape: &mut Tape, instance: &[f64]) -> Result<Var> {
        match self {
            BoundExtractor::Identity { dim } => {
                if instance.len() != *dim {
                    return Err(Error::dimension(
                        "identity embed",
                        &[instance.len()],
                        &[*dim],
                    ));
                }
                Ok(tape.leaf(Tensor::vector(instance.to_vec())?))
            }
            BoundExtractor::Mlp { w1, b1, w2, b2 } => {
                let x = tape.leaf(Tensor::vector(instance.to_vec())?);
                let hidden = tape.linear(*w1, x, Some(*b1))?;
                let hidden = tape.relu(hidden);
                tape.linear(*w2, hidden, Some(*b2))
            }
            BoundExtractor::LeNet {
                conv1_k,
                conv1_b,
                conv2_k,
                conv2_b,
                fc1_w,
                fc1_b,
                fc2_w,
                fc2_b,
            } => {
                if instance.len() != LENET_SIDE * LENET_SIDE {
                    return Err(Error::dimension(
                        "lenet embed",
                        &[instance.len()],
                        &[LENET_SIDE * LENET_SIDE],
                    ));
                }
                let x = tape.leaf(Tensor::new(
                    vec![1, LENET_SIDE, LENET_SIDE],
                    instance.to_vec(),
                )?);
                let c1 = tape.conv2d(x, *conv1_k, Some(*conv1_b), 1)?;
                let c1 = tape.relu(c1);
                let p1 = tape.maxpool2d(c1, 2, 2)?;
                let c2 = tape.conv2d(p1, *conv2_k, Some(*conv2_b), 1)?;
                let c2 = tape.relu(c2);
                let p2 = tape.maxpool2d(c2, 2, 2)?;
                let flat = tape.reshape(p2, vec![LENET_FLAT])?;
                let fc1 = tape.linear(*fc1_w, flat, Some(*fc1_b))?;
                let fc1 = tape.relu(fc1);
                tape.linear(*fc2_w, fc1, Some(*fc2_b))
            }
        }
    }

    /// Adds the tape gradients of this binding into the extractor parameters.
    pub fn accumulate(&self, tape: &Tape, extractor: &mut Extractor) -> Result<()> {
        match (self, extractor) {
            (BoundExtractor::Identity { .. }, Extractor::Identity { .. }) => Ok(()),
            (
                BoundExtractor::Mlp { w1, b1, w2, b2 },
                Extractor::Mlp {
                    w1: pw1,
                    b1: pb1,
                    w2: pw2,
                    b2: pb2,
                },
            ) => {
                pw1.accumulate_grad(tape.grad(*w1)?);
                pb1.accumulate_grad(tape.grad(*b1)?);
                pw2.accumulate_grad(tape.grad(*w2)?);
                pb2.accumulate_grad(tape.grad(*b2)?);
                Ok(())
            }
            (
                BoundExtractor::LeNet {
                    conv1_k,
                    conv1_b,
                    conv2_k,
                    conv2_b,
                    fc1_w,
                    fc1_b,
                    fc2_w,
                    fc2_b,
                },
                Extractor::LeNet {
                    conv1_k: p1k,
                    conv1_b: p1b,
                    conv2_k: p2k,
                    conv2_b: p2b,
                    fc1_w: pf1w,
                    fc1_b: pf1b,
                    fc2_w: pf2w,
                    fc2_b: pf2b,
                },
            ) => {
                p1k.accumulate_grad(tape.grad(*conv1_k)?);
                p1b.accumulate_grad(tape.grad(*conv1_b)?);
                p2k.accumulate_grad(tape.grad(*conv2_k)?);
                p2b.accumulate_grad(tape.grad(*conv2_b)?);
                pf1w.accumulate_grad(tape.grad(*fc1_w)?);
                pf1b.accumulate_grad(tape.grad(*fc1_b)?);
                pf2w.accumulate_grad(tape.grad(*fc2_w)?);
                pf2b.accumulate_grad(tape.grad(*fc2_b)?);
                Ok(())
            }
            _ => Err(Error::Usage(
                "bound extractor does not match the extractor it is applied to".into(),
            )),
        }
    }
}
