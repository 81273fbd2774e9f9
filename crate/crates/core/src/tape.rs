//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! Every forward operation appends a node holding its result tensor and the
//! indices of its operands; nodes are therefore already in topological order
//! and `backward` replays them in reverse, accumulating gradients. A tape is
//! consumed by exactly one backward pass.
//!
//! Determinism rules: every reduction sums in ascending index order, except
//! the softmax normalizer which sums its addends in ascending value order so
//! that attention weights are exactly permutation-equivariant.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add {
        a: usize,
        b: usize,
    },
    /// c_a * a + c_b * b, elementwise.
    LinComb {
        a: usize,
        b: usize,
        ca: f64,
        cb: f64,
    },
    AddScalar {
        x: usize,
    },
    Scale {
        x: usize,
        c: f64,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Relu {
        x: usize,
    },
    Tanh {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Softmax {
        x: usize,
    },
    Sum {
        x: usize,
    },
    /// A[m,k] · B[k,n] with the inner sum in ascending k order.
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    /// M[rows,cols] · v[cols]; used for the attention-weighted bag embedding.
    MatVec {
        m: usize,
        v: usize,
        rows: usize,
        cols: usize,
    },
    /// W[m,k] · x[k] (+ bias[m]); identical inner-loop order to MatMul so a
    /// vector pushed through `linear` matches the corresponding MatMul column
    /// bit for bit.
    Linear {
        w: usize,
        x: usize,
        bias: Option<usize>,
        m: usize,
        k: usize,
    },
    /// Max over a vector; gradient routes only to the recorded argmax.
    ReduceMax {
        x: usize,
        argmax: usize,
    },
    /// s[i] = <Q[:,i], Q[:,anchor]> for all i: exactly n inner products.
    AttnScores {
        q: usize,
        anchor: usize,
        l: usize,
        n: usize,
    },
    /// Stack column vectors of equal length into an [rows, n] matrix.
    ConcatCols {
        cols: Vec<usize>,
        rows: usize,
    },
    /// Per-row max over the columns of an [rows, cols] matrix.
    RowMax {
        x: usize,
        cols: usize,
        argmax: Vec<usize>,
    },
    RowMean {
        x: usize,
        cols: usize,
    },
    Reshape {
        x: usize,
    },
    Conv2d {
        x: usize,
        kernel: usize,
        bias: Option<usize>,
        stride: usize,
    },
    MaxPool2d {
        x: usize,
        argmax: Vec<usize>,
    },
}

struct Node {
    data: Tensor,
    op: Op,
}

/// The expression tape. One tape per forward/backward pass.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Vec<f64>>>,
    consumed: bool,
    attention_inner_products: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: None,
            consumed: false,
            attention_inner_products: 0,
        }
    }

    fn push(&mut self, data: Tensor, op: Op) -> Var {
        debug_assert!(data.is_finite(), "non-finite forward result");
        self.nodes.push(Node { data, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total inner products evaluated by `attention_scores` on this tape.
    pub fn attention_inner_products(&self) -> u64 {
        self.attention_inner_products
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].data
    }

    /// Gradient of the loss w.r.t. `v`; only valid after `backward`.
    pub fn grad(&self, v: Var) -> Result<&[f64]> {
        match &self.grads {
            Some(g) => Ok(&g[v.0]),
            None => Err(Error::Usage("grad queried before backward".into())),
        }
    }

    // ---- forward operations -------------------------------------------

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.push(Tensor::scalar(v), Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dimension("add", ta.shape(), tb.shape()));
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Add { a: a.0, b: b.0 },
        ))
    }

    /// Elementwise `ca*a + cb*b`; the dual-stream score combination.
    pub fn lin_comb(&mut self, a: Var, b: Var, ca: f64, cb: f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dimension("lin_comb", ta.shape(), tb.shape()));
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| ca * x + cb * y)
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::LinComb {
                a: a.0,
                b: b.0,
                ca,
                cb,
            },
        ))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let data: Vec<f64> = t.data().iter().map(|v| v + c).collect();
        let shape = t.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::AddScalar { x: x.0 },
        )
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let data: Vec<f64> = t.data().iter().map(|v| c * v).collect();
        let shape = t.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Scale { x: x.0, c },
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dimension("mul", ta.shape(), tb.shape()));
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Mul { a: a.0, b: b.0 },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data: Vec<f64> = t.data().iter().map(|v| v.max(0.0)).collect();
        let shape = t.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Relu { x: x.0 },
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data: Vec<f64> = t.data().iter().map(|v| v.tanh()).collect();
        let shape = t.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Tanh { x: x.0 },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data: Vec<f64> = t.data().iter().map(|&v| sigmoid(v)).collect();
        let shape = t.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Sigmoid { x: x.0 },
        )
    }

    /// Numerically stable softmax over a vector. The normalizer is summed in
    /// ascending value order, which makes the output exactly equivariant
    /// under permutations of the input.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 1 {
            return Err(Error::dimension("softmax", t.shape(), &[0]));
        }
        let data = softmax_vec(t.data());
        Ok(self.push(
            Tensor::vector(data).expect("non-empty"),
            Op::Softmax { x: x.0 },
        ))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum { x: x.0 })
    }

    /// Maximum of a vector together with the smallest index attaining it.
    /// The gradient flows only to that element.
    pub fn reduce_max_with_index(&mut self, x: Var) -> Result<(Var, usize)> {
        let t = self.value(x);
        if t.shape().len() != 1 {
            return Err(Error::dimension("reduce_max_with_index", t.shape(), &[0]));
        }
        let (argmax, max) = argmax_first(t.data());
        let v = self.push(Tensor::scalar(max), Op::ReduceMax { x: x.0, argmax });
        Ok((v, argmax))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::dimension("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += ta.data()[i * k + p] * tb.data()[p * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Ok(self.push(
            Tensor::matrix(m, n, out).expect("sized above"),
            Op::MatMul {
                a: a.0,
                b: b.0,
                m,
                k,
                n,
            },
        ))
    }

    /// Attention-weighted column sum: out = Σ_i v[i] · M[:, i], ascending i.
    pub fn weighted_sum(&mut self, m: Var, v: Var) -> Result<Var> {
        let (tm, tv) = (self.value(m), self.value(v));
        if tm.shape().len() != 2 || tv.shape().len() != 1 || tm.cols() != tv.len() {
            return Err(Error::dimension("weighted_sum", tm.shape(), tv.shape()));
        }
        let (rows, cols) = (tm.rows(), tm.cols());
        let mut out = vec![0.0; rows];
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += tm.data()[r * cols + c] * tv.data()[c];
            }
            *slot = acc;
        }
        Ok(self.push(
            Tensor::vector(out).expect("rows > 0"),
            Op::MatVec {
                m: m.0,
                v: v.0,
                rows,
                cols,
            },
        ))
    }

    /// Fully connected layer on a vector: W[m,k]·x[k] (+ bias).
    pub fn linear(&mut self, w: Var, x: Var, bias: Option<Var>) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.shape().len() != 2 || tx.shape().len() != 1 || tw.cols() != tx.len() {
            return Err(Error::dimension("linear", tw.shape(), tx.shape()));
        }
        let (m, k) = (tw.rows(), tw.cols());
        if let Some(b) = bias {
            let tb = self.value(b);
            if tb.shape() != [m] {
                return Err(Error::dimension("linear (bias)", &[m], tb.shape()));
            }
        }
        let mut out = vec![0.0; m];
        let tw = self.value(w);
        let tx = self.value(x);
        for (row, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in 0..k {
                acc += tw.data()[row * k + p] * tx.data()[p];
            }
            *slot = acc;
        }
        if let Some(b) = bias {
            for (slot, bv) in out.iter_mut().zip(self.value(b).data()) {
                *slot += bv;
            }
        }
        Ok(self.push(
            Tensor::vector(out).expect("m > 0"),
            Op::Linear {
                w: w.0,
                x: x.0,
                bias: bias.map(|b| b.0),
                m,
                k,
            },
        ))
    }

    /// Max self-attention logits: s[i] = <Q[:,i], Q[:,anchor]>. Evaluates
    /// exactly `n` inner products and adds them to the tape counter.
    pub fn attention_scores(&mut self, q: Var, anchor: usize) -> Result<Var> {
        let tq = self.value(q);
        if tq.shape().len() != 2 {
            return Err(Error::dimension("attention_scores", tq.shape(), &[0, 0]));
        }
        let (l, n) = (tq.rows(), tq.cols());
        if anchor >= n {
            return Err(Error::Usage(format!(
                "attention anchor index {anchor} out of range for {n} instances"
            )));
        }
        let mut out = vec![0.0; n];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..l {
                acc += tq.data()[r * n + i] * tq.data()[r * n + anchor];
            }
            *slot = acc;
        }
        self.attention_inner_products += n as u64;
        Ok(self.push(
            Tensor::vector(out).expect("n > 0"),
            Op::AttnScores {
                q: q.0,
                anchor,
                l,
                n,
            },
        ))
    }

    /// Stack equal-length column vectors into an [rows, n] matrix.
    pub fn concat_cols(&mut self, cols: &[Var]) -> Result<Var> {
        if cols.is_empty() {
            return Err(Error::Domain("concat_cols on empty column list".into()));
        }
        let rows = self.value(cols[0]).len();
        for &c in cols {
            let t = self.value(c);
            if t.shape().len() != 1 || t.len() != rows {
                return Err(Error::dimension("concat_cols", &[rows], t.shape()));
            }
        }
        let n = cols.len();
        let mut out = vec![0.0; rows * n];
        for (j, &c) in cols.iter().enumerate() {
            for (r, &v) in self.value(c).data().iter().enumerate() {
                out[r * n + j] = v;
            }
        }
        Ok(self.push(
            Tensor::matrix(rows, n, out).expect("sized above"),
            Op::ConcatCols {
                cols: cols.iter().map(|c| c.0).collect(),
                rows,
            },
        ))
    }

    /// Per-row maximum over columns (elementwise max-pooling of embeddings).
    pub fn row_max(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::dimension("row_max", t.shape(), &[0, 0]));
        }
        let (rows, cols) = (t.rows(), t.cols());
        let mut out = vec![0.0; rows];
        let mut argmax = vec![0usize; rows];
        for r in 0..rows {
            let (j, v) = argmax_first(&t.data()[r * cols..(r + 1) * cols]);
            out[r] = v;
            argmax[r] = j;
        }
        Ok(self.push(
            Tensor::vector(out).expect("rows > 0"),
            Op::RowMax {
                x: x.0,
                cols,
                argmax,
            },
        ))
    }

    /// Per-row mean over columns.
    pub fn row_mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::dimension("row_mean", t.shape(), &[0, 0]));
        }
        let (rows, cols) = (t.rows(), t.cols());
        let inv = 1.0 / cols as f64;
        let mut out = vec![0.0; rows];
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += t.data()[r * cols + c];
            }
            *slot = acc * inv;
        }
        Ok(self.push(
            Tensor::vector(out).expect("rows > 0"),
            Op::RowMean { x: x.0, cols },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x);
        let numel: usize = shape.iter().product();
        if shape.is_empty() || numel != t.len() {
            return Err(Error::dimension("reshape", t.shape(), &shape));
        }
        let data = t.data().to_vec();
        Ok(self.push(
            Tensor::new(shape, data).expect("checked above"),
            Op::Reshape { x: x.0 },
        ))
    }

    /// Valid-padding cross-correlation: x[C,H,W] * kernel[F,C,k,k] (+ bias[F]).
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        if tx.shape().len() != 3 || tk.shape().len() != 4 {
            return Err(Error::dimension("conv2d", tx.shape(), tk.shape()));
        }
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (f, kc, kh, kw) = (tk.shape()[0], tk.shape()[1], tk.shape()[2], tk.shape()[3]);
        if kc != c || kh != kw || kh > h || kw > w || stride == 0 {
            return Err(Error::dimension("conv2d", tx.shape(), tk.shape()));
        }
        if let Some(b) = bias {
            let tb = self.value(b);
            if tb.shape() != [f] {
                return Err(Error::dimension("conv2d (bias)", &[f], tb.shape()));
            }
        }
        let oh = (h - kh) / stride + 1;
        let ow = (w - kw) / stride + 1;
        let tx = self.value(x);
        let tk = self.value(kernel);
        let mut out = vec![0.0; f * oh * ow];
        for fi in 0..f {
            let b0 = bias.map_or(0.0, |b| self.value(b).data()[fi]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b0;
                    for ci in 0..c {
                        for ky in 0..kh {
                            let xrow = (ci * h + oy * stride + ky) * w + ox * stride;
                            let krow = ((fi * c + ci) * kh + ky) * kw;
                            for kx in 0..kw {
                                acc += tx.data()[xrow + kx] * tk.data()[krow + kx];
                            }
                        }
                    }
                    out[(fi * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![f, oh, ow], out).expect("sized above"),
            Op::Conv2d {
                x: x.0,
                kernel: kernel.0,
                bias: bias.map(|b| b.0),
                stride,
            },
        ))
    }

    /// Per-window max over spatial dims; the window must tile exactly under
    /// the stride. Gradient routes to the first (lowest-index) max per window.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 3 || window == 0 || stride == 0 {
            return Err(Error::dimension("maxpool2d", t.shape(), &[window, window]));
        }
        let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        if window > h || window > w || (h - window) % stride != 0 || (w - window) % stride != 0 {
            return Err(Error::dimension("maxpool2d", t.shape(), &[window, window]));
        }
        let oh = (h - window) / stride + 1;
        let ow = (w - window) / stride + 1;
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for wy in 0..window {
                        for wx in 0..window {
                            let idx = (ci * h + oy * stride + wy) * w + ox * stride + wx;
                            if t.data()[idx] > best {
                                best = t.data()[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (ci * oh + oy) * ow + ox;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![c, oh, ow], out).expect("sized above"),
            Op::MaxPool2d { x: x.0, argmax },
        ))
    }

    // ---- backward ------------------------------------------------------

    /// Accumulates d(loss)/d(node) for every node on the tape. `loss` must be
    /// scalar, and the tape can be consumed only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::Usage("backward on a consumed graph".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.data.len()]).collect();
        grads[loss.0][0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            let g = std::mem::take(&mut grads[i]);
            self.backprop_node(i, &g, &mut grads);
            grads[i] = g;
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                for (slot, gv) in grads[*a].iter_mut().zip(g) {
                    *slot += gv;
                }
                for (slot, gv) in grads[*b].iter_mut().zip(g) {
                    *slot += gv;
                }
            }
            Op::LinComb { a, b, ca, cb } => {
                for (slot, gv) in grads[*a].iter_mut().zip(g) {
                    *slot += ca * gv;
                }
                for (slot, gv) in grads[*b].iter_mut().zip(g) {
                    *slot += cb * gv;
                }
            }
            Op::AddScalar { x } => {
                for (slot, gv) in grads[*x].iter_mut().zip(g) {
                    *slot += gv;
                }
            }
            Op::Scale { x, c } => {
                for (slot, gv) in grads[*x].iter_mut().zip(g) {
                    *slot += c * gv;
                }
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (self.nodes[*a].data.data(), self.nodes[*b].data.data());
                for (idx, gv) in g.iter().enumerate() {
                    grads[*a][idx] += gv * tb[idx];
                }
                for (idx, gv) in g.iter().enumerate() {
                    grads[*b][idx] += gv * ta[idx];
                }
            }
            Op::Relu { x } => {
                let tx = self.nodes[*x].data.data();
                for (idx, gv) in g.iter().enumerate() {
                    if tx[idx] > 0.0 {
                        grads[*x][idx] += gv;
                    }
                }
            }
            Op::Tanh { x } => {
                let y = node.data.data();
                for (idx, gv) in g.iter().enumerate() {
                    grads[*x][idx] += gv * (1.0 - y[idx] * y[idx]);
                }
            }
            Op::Sigmoid { x } => {
                let y = node.data.data();
                for (idx, gv) in g.iter().enumerate() {
                    grads[*x][idx] += gv * y[idx] * (1.0 - y[idx]);
                }
            }
            Op::Softmax { x } => {
                let y = node.data.data();
                let dot: f64 = g.iter().zip(y).map(|(gv, yv)| gv * yv).sum();
                for (idx, yv) in y.iter().enumerate() {
                    grads[*x][idx] += yv * (g[idx] - dot);
                }
            }
            Op::Sum { x } => {
                let gv = g[0];
                for slot in grads[*x].iter_mut() {
                    *slot += gv;
                }
            }
            Op::MatMul { a, b, m, k, n } => {
                let (ta, tb) = (self.nodes[*a].data.data(), self.nodes[*b].data.data());
                // dA[i,p] += Σ_j g[i,j]·B[p,j];  dB[p,j] += Σ_i A[i,p]·g[i,j]
                for i2 in 0..*m {
                    for p in 0..*k {
                        let mut acc = 0.0;
                        for j in 0..*n {
                            acc += g[i2 * n + j] * tb[p * n + j];
                        }
                        grads[*a][i2 * k + p] += acc;
                    }
                }
                for p in 0..*k {
                    for j in 0..*n {
                        let mut acc = 0.0;
                        for i2 in 0..*m {
                            acc += ta[i2 * k + p] * g[i2 * n + j];
                        }
                        grads[*b][p * n + j] += acc;
                    }
                }
            }
            Op::MatVec { m, v, rows, cols } => {
                let (tm, tv) = (self.nodes[*m].data.data(), self.nodes[*v].data.data());
                for r in 0..*rows {
                    let gr = g[r];
                    for c in 0..*cols {
                        grads[*m][r * cols + c] += gr * tv[c];
                    }
                }
                for c in 0..*cols {
                    let mut acc = 0.0;
                    for r in 0..*rows {
                        acc += tm[r * cols + c] * g[r];
                    }
                    grads[*v][c] += acc;
                }
            }
            Op::Linear { w, x, bias, m, k } => {
                let (tw, tx) = (self.nodes[*w].data.data(), self.nodes[*x].data.data());
                for row in 0..*m {
                    let gr = g[row];
                    for p in 0..*k {
                        grads[*w][row * k + p] += gr * tx[p];
                    }
                }
                for p in 0..*k {
                    let mut acc = 0.0;
                    for row in 0..*m {
                        acc += tw[row * k + p] * g[row];
                    }
                    grads[*x][p] += acc;
                }
                if let Some(b) = bias {
                    for (slot, gv) in grads[*b].iter_mut().zip(g) {
                        *slot += gv;
                    }
                }
            }
            Op::ReduceMax { x, argmax } => {
                grads[*x][*argmax] += g[0];
            }
            Op::AttnScores { q, anchor, l, n } => {
                let tq = self.nodes[*q].data.data();
                // s_i = <q_i, q_m>: dq_i += ds_i·q_m and dq_m += ds_i·q_i.
                for i2 in 0..*n {
                    let ds = g[i2];
                    for r in 0..*l {
                        grads[*q][r * n + i2] += ds * tq[r * n + anchor];
                        grads[*q][r * n + anchor] += ds * tq[r * n + i2];
                    }
                }
            }
            Op::ConcatCols { cols, rows } => {
                let n = cols.len();
                for (j, &c) in cols.iter().enumerate() {
                    for r in 0..*rows {
                        grads[c][r] += g[r * n + j];
                    }
                }
            }
            Op::RowMax { x, cols, argmax } => {
                for (r, &j) in argmax.iter().enumerate() {
                    grads[*x][r * cols + j] += g[r];
                }
            }
            Op::RowMean { x, cols } => {
                let inv = 1.0 / *cols as f64;
                for (r, gv) in g.iter().enumerate() {
                    for c in 0..*cols {
                        grads[*x][r * cols + c] += gv * inv;
                    }
                }
            }
            Op::Reshape { x } => {
                for (slot, gv) in grads[*x].iter_mut().zip(g) {
                    *slot += gv;
                }
            }
            Op::Conv2d {
                x,
                kernel,
                bias,
                stride,
            } => {
                let tx = &self.nodes[*x].data;
                let tk = &self.nodes[*kernel].data;
                let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (f, _, kh, kw) = (
                    tk.shape()[0],
                    tk.shape()[1],
                    tk.shape()[2],
                    tk.shape()[3],
                );
                let (oh, ow) = ((h - kh) / stride + 1, (w - kw) / stride + 1);
                let (xd, kd) = (tx.data(), tk.data());
                for fi in 0..f {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gv = g[(fi * oh + oy) * ow + ox];
                            if let Some(b) = bias {
                                grads[*b][fi] += gv;
                            }
                            for ci in 0..c {
                                for ky in 0..kh {
                                    let xrow = (ci * h + oy * stride + ky) * w + ox * stride;
                                    let krow = ((fi * c + ci) * kh + ky) * kw;
                                    for kx in 0..kw {
                                        grads[*kernel][krow + kx] += gv * xd[xrow + kx];
                                        grads[*x][xrow + kx] += gv * kd[krow + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::MaxPool2d { x, argmax } => {
                for (o, &src) in argmax.iter().enumerate() {
                    grads[*x][src] += g[o];
                }
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of a slice, normalizer summed in ascending value order.
pub fn softmax_vec(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let mut sorted = exps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let denom: f64 = sorted.iter().sum();
    exps.iter().map(|e| e / denom).collect()
}

/// Max value and the smallest index attaining it.
fn argmax_first(x: &[f64]) -> (usize, f64) {
    let mut best = x[0];
    let mut idx = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            idx = i;
        }
    }
    (idx, best)
}
