use super::kernels::gemm;
use super::params::{Gradients, ParamId, ParamStore};
use super::{Result, Tensor, TensorError, LOG_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    /// `a · b`, or `a · bᵀ` when `b_t`.
    MatMul {
        a: NodeId,
        b: NodeId,
        b_t: bool,
    },
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceCols {
        a: NodeId,
        start: usize,
    },
    GatherRows {
        a: NodeId,
        idx: Vec<usize>,
    },
    GatherCols {
        a: NodeId,
        idx: Vec<Option<usize>>,
    },
    Sum(NodeId),
    MeanRows(NodeId),
    Nll {
        p: NodeId,
        targets: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Operation tape. Nodes are appended in evaluation order, which is also a
/// topological order, so backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

fn mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> TensorError {
    TensorError::Mismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, cols], data).expect("internal shape bookkeeping")
}

/// Runs `f` with a mutable gradient buffer for `id`, creating it on first use.
fn with_grad(nodes: &mut [Node], id: NodeId, f: impl FnOnce(&[Node], &mut [f64])) {
    if !nodes[id.0].requires_grad {
        return;
    }
    let mut g = nodes[id.0]
        .grad
        .take()
        .unwrap_or_else(|| vec![0.0; nodes[id.0].value.len()]);
    f(nodes, &mut g);
    nodes[id.0].grad = Some(g);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false, Op::Leaf)
    }

    /// A free input that receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true, Op::Leaf)
    }

    /// Loads a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if id.0 >= self.param_nodes.len() {
            self.param_nodes.resize(id.0 + 1, None);
        }
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let n = self.leaf(store.value(id).clone(), true, Op::Param(id));
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.mm(a, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.mm(a, b, true)
    }

    fn mm(&mut self, a: NodeId, b: NodeId, b_t: bool) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (va.rows(), va.cols());
        let (kb, n) = if b_t {
            (vb.cols(), vb.rows())
        } else {
            (vb.rows(), vb.cols())
        };
        if k != kb {
            return Err(mismatch("matmul", va, vb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), b_t, &mut out, false);
        Ok(self.push(matrix(m, n, out), Op::MatMul { a, b, b_t }, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.rows() != vb.rows() || va.cols() != vb.cols() {
            return Err(mismatch("add", va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let (r, c) = (va.rows(), va.cols());
        Ok(self.push(matrix(r, c, data), Op::Add(a, b), &[a, b]))
    }

    /// Adds a length-`cols` vector to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let c = va.cols();
        if vb.len() != c {
            return Err(mismatch("add_bias", va, vb));
        }
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vb.data()[i % c])
            .collect();
        let r = va.rows();
        Ok(self.push(matrix(r, c, data), Op::AddBias(a, bias), &[a, bias]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.rows() != vb.rows() || va.cols() != vb.cols() {
            return Err(mismatch("mul", va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let (r, c) = (va.rows(), va.cols());
        Ok(self.push(matrix(r, c, data), Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| x * factor).collect();
        let (r, c) = (va.rows(), va.cols());
        self.push(matrix(r, c, data), Op::Scale(a, factor), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| x.max(0.0)).collect();
        let (r, c) = (va.rows(), va.cols());
        self.push(matrix(r, c, data), Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| x.tanh()).collect();
        let (r, c) = (va.rows(), va.cols());
        self.push(matrix(r, c, data), Op::Tanh(a), &[a])
    }

    /// Row-wise softmax. Entries where `keep` is false get probability
    /// exactly 0 and receive no gradient; every row must keep at least one.
    pub fn softmax(&mut self, a: NodeId, keep: Option<&[bool]>) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        let (r, c) = (va.rows(), va.cols());
        if let Some(k) = keep {
            if k.len() != va.len() {
                return Err(TensorError::Contract(format!(
                    "softmax mask has {} entries for {} values",
                    k.len(),
                    va.len()
                )));
            }
        }
        let mut out = vec![0.0; r * c];
        for row in 0..r {
            let xs = &va.data()[row * c..(row + 1) * c];
            let live = |j: usize| keep.is_none_or(|k| k[row * c + j]);
            let max = (0..c)
                .filter(|&j| live(j))
                .map(|j| xs[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::Contract(format!(
                    "softmax row {row} has no unmasked entries"
                )));
            }
            let ys = &mut out[row * c..(row + 1) * c];
            let mut total = 0.0;
            for j in 0..c {
                if live(j) {
                    ys[j] = (xs[j] - max).exp();
                    total += ys[j];
                }
            }
            for y in ys.iter_mut() {
                *y /= total;
            }
        }
        Ok(self.push(matrix(r, c, out), Op::Softmax(a), &[a]))
    }

    /// Per-row normalization to zero mean and unit variance, then `γ·x̂ + β`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        const EPS: f64 = 1e-5;
        let vx = &self.nodes[x.0].value;
        let (r, c) = (vx.rows(), vx.cols());
        let (vg, vb) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        if vg.len() != c || vb.len() != c {
            return Err(mismatch("layer_norm", vx, vg));
        }
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for row in 0..r {
            let xs = &vx.data()[row * c..(row + 1) * c];
            let mean = xs.iter().sum::<f64>() / c as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[row] = is;
            for j in 0..c {
                let h = (xs[j] - mean) * is;
                xhat[row * c + j] = h;
                out[row * c + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        Ok(self.push(
            matrix(r, c, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let vt = &self.nodes[table.0].value;
        let (v, d) = (vt.rows(), vt.cols());
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= v {
                return Err(TensorError::Contract(format!(
                    "embedding id {i} outside table of {v} rows"
                )));
            }
            out.extend_from_slice(vt.row(i));
        }
        Ok(self.push(
            matrix(ids.len(), d, out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat of nothing".into()))?;
        let c = self.nodes[first.0].value.cols();
        let mut out = Vec::new();
        let mut r = 0;
        for p in parts {
            let vp = &self.nodes[p.0].value;
            if vp.cols() != c {
                return Err(mismatch("concat_rows", &self.nodes[first.0].value, vp));
            }
            out.extend_from_slice(vp.data());
            r += vp.rows();
        }
        Ok(self.push(matrix(r, c, out), Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat of nothing".into()))?;
        let r = self.nodes[first.0].value.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let vp = &self.nodes[p.0].value;
            if vp.rows() != r {
                return Err(mismatch("concat_cols", &self.nodes[first.0].value, vp));
            }
            widths.push(vp.cols());
        }
        let c: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * c);
        for row in 0..r {
            for p in parts {
                out.extend_from_slice(self.nodes[p.0].value.row(row));
            }
        }
        Ok(self.push(matrix(r, c, out), Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        if start > end || end > va.cols() {
            return Err(TensorError::Contract(format!(
                "column slice {start}..{end} of width {}",
                va.cols()
            )));
        }
        let r = va.rows();
        let mut out = Vec::with_capacity(r * (end - start));
        for row in 0..r {
            out.extend_from_slice(&va.row(row)[start..end]);
        }
        Ok(self.push(matrix(r, end - start, out), Op::SliceCols { a, start }, &[a]))
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        let c = va.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= va.rows() {
                return Err(TensorError::Contract(format!("row {i} outside {} rows", va.rows())));
            }
            out.extend_from_slice(va.row(i));
        }
        Ok(self.push(matrix(idx.len(), c, out), Op::GatherRows { a, idx: idx.to_vec() }, &[a]))
    }

    /// Column `idx[j]` of `a` becomes column `j`; `None` yields a zero column.
    pub fn gather_cols(&mut self, a: NodeId, idx: &[Option<usize>]) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        let (r, c) = (va.rows(), va.cols());
        if let Some(bad) = idx.iter().flatten().find(|&&i| i >= c) {
            return Err(TensorError::Contract(format!("column {bad} outside {c} columns")));
        }
        let mut out = vec![0.0; r * idx.len()];
        for row in 0..r {
            for (j, src) in idx.iter().enumerate() {
                if let Some(s) = src {
                    out[row * idx.len() + j] = va.data()[row * c + s];
                }
            }
        }
        Ok(self.push(matrix(r, idx.len(), out), Op::GatherCols { a, idx: idx.to_vec() }, &[a]))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a), &[a])
    }

    /// Column means, as a `[1, cols]` row.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let (r, c) = (va.rows(), va.cols());
        let mut out = vec![0.0; c];
        for row in 0..r {
            add_into(&mut out, va.row(row));
        }
        for v in &mut out {
            *v /= r as f64;
        }
        self.push(matrix(1, c, out), Op::MeanRows(a), &[a])
    }

    /// Mean over rows of `-ln max(p[row, target], 1e-12)`.
    pub fn nll(&mut self, p: NodeId, targets: &[usize]) -> Result<NodeId> {
        let vp = &self.nodes[p.0].value;
        let (r, c) = (vp.rows(), vp.cols());
        if targets.len() != r || r == 0 {
            return Err(TensorError::Contract(format!(
                "{} targets for {r} distributions",
                targets.len()
            )));
        }
        let mut total = 0.0;
        for (row, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(TensorError::Contract(format!("target {t} outside {c} classes")));
            }
            total -= vp.data()[row * c + t].max(LOG_EPS).ln();
        }
        Ok(self.push(
            Tensor::scalar(total / r as f64),
            Op::Nll {
                p,
                targets: targets.to_vec(),
            },
            &[p],
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward from non-scalar of shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(g) = node.grad.as_deref() else {
                continue;
            };
            let out = &node.value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul { a, b, b_t } => {
                    let (m, n) = (out.rows(), out.cols());
                    let k = before[a.0].value.cols();
                    let b_t = *b_t;
                    with_grad(before, *a, |ns, ga| {
                        gemm(m, n, k, g, false, ns[b.0].value.data(), !b_t, ga, true);
                    });
                    with_grad(before, *b, |ns, gb| {
                        let va = ns[a.0].value.data();
                        if b_t {
                            gemm(n, m, k, g, true, va, false, gb, true);
                        } else {
                            gemm(k, m, n, va, true, g, false, gb, true);
                        }
                    });
                }
                Op::Add(a, b) => {
                    with_grad(before, *a, |_, ga| add_into(ga, g));
                    with_grad(before, *b, |_, gb| add_into(gb, g));
                }
                Op::AddBias(a, b) => {
                    let c = out.cols();
                    with_grad(before, *a, |_, ga| add_into(ga, g));
                    with_grad(before, *b, |_, gb| {
                        for (i, v) in g.iter().enumerate() {
                            gb[i % c] += v;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    with_grad(before, *a, |ns, ga| {
                        for ((d, x), y) in ga.iter_mut().zip(g).zip(ns[b.0].value.data()) {
                            *d += x * y;
                        }
                    });
                    with_grad(before, *b, |ns, gb| {
                        for ((d, x), y) in gb.iter_mut().zip(g).zip(ns[a.0].value.data()) {
                            *d += x * y;
                        }
                    });
                }
                Op::Scale(a, f) => {
                    with_grad(before, *a, |_, ga| {
                        for (d, x) in ga.iter_mut().zip(g) {
                            *d += f * x;
                        }
                    });
                }
                Op::Relu(a) => {
                    with_grad(before, *a, |ns, ga| {
                        for ((d, x), v) in ga.iter_mut().zip(g).zip(ns[a.0].value.data()) {
                            if *v > 0.0 {
                                *d += x;
                            }
                        }
                    });
                }
                Op::Tanh(a) => {
                    with_grad(before, *a, |_, ga| {
                        for ((d, x), y) in ga.iter_mut().zip(g).zip(out.data()) {
                            *d += x * (1.0 - y * y);
                        }
                    });
                }
                Op::Softmax(a) => {
                    let c = out.cols();
                    with_grad(before, *a, |_, ga| {
                        for row in 0..out.rows() {
                            let ys = &out.data()[row * c..(row + 1) * c];
                            let gs = &g[row * c..(row + 1) * c];
                            let dot: f64 = ys.iter().zip(gs).map(|(y, d)| y * d).sum();
                            for j in 0..c {
                                ga[row * c + j] += ys[j] * (gs[j] - dot);
                            }
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let c = out.cols();
                    let r = out.rows();
                    with_grad(before, *x, |ns, gx| {
                        let gam = ns[gamma.0].value.data();
                        let mut dxhat = vec![0.0; c];
                        for row in 0..r {
                            let gs = &g[row * c..(row + 1) * c];
                            let hs = &xhat[row * c..(row + 1) * c];
                            for j in 0..c {
                                dxhat[j] = gs[j] * gam[j];
                            }
                            let s1: f64 = dxhat.iter().sum();
                            let s2: f64 = dxhat.iter().zip(hs).map(|(d, h)| d * h).sum();
                            let scale = inv_std[row] / c as f64;
                            for j in 0..c {
                                gx[row * c + j] += scale * (c as f64 * dxhat[j] - s1 - hs[j] * s2);
                            }
                        }
                    });
                    with_grad(before, *gamma, |_, gg| {
                        for (i, v) in g.iter().enumerate() {
                            gg[i % c] += v * xhat[i];
                        }
                    });
                    with_grad(before, *beta, |_, gb| {
                        for (i, v) in g.iter().enumerate() {
                            gb[i % c] += v;
                        }
                    });
                }
                Op::Embedding { table, ids } => {
                    let d = out.cols();
                    with_grad(before, *table, |_, gt| {
                        for (r, &id) in ids.iter().enumerate() {
                            add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                        }
                    });
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = before[p.0].value.len();
                        with_grad(before, *p, |_, gp| add_into(gp, &g[offset..offset + len]));
                        offset += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let c = out.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = before[p.0].value.cols();
                        with_grad(before, *p, |_, gp| {
                            for row in 0..out.rows() {
                                add_into(
                                    &mut gp[row * w..(row + 1) * w],
                                    &g[row * c + offset..row * c + offset + w],
                                );
                            }
                        });
                        offset += w;
                    }
                }
                Op::SliceCols { a, start } => {
                    let w = out.cols();
                    let c = before[a.0].value.cols();
                    with_grad(before, *a, |_, ga| {
                        for row in 0..out.rows() {
                            add_into(
                                &mut ga[row * c + start..row * c + start + w],
                                &g[row * w..(row + 1) * w],
                            );
                        }
                    });
                }
                Op::GatherRows { a, idx } => {
                    let c = out.cols();
                    with_grad(before, *a, |_, ga| {
                        for (r, &src) in idx.iter().enumerate() {
                            add_into(&mut ga[src * c..(src + 1) * c], &g[r * c..(r + 1) * c]);
                        }
                    });
                }
                Op::GatherCols { a, idx } => {
                    let c = before[a.0].value.cols();
                    let w = idx.len();
                    with_grad(before, *a, |_, ga| {
                        for row in 0..out.rows() {
                            for (j, src) in idx.iter().enumerate() {
                                if let Some(s) = src {
                                    ga[row * c + s] += g[row * w + j];
                                }
                            }
                        }
                    });
                }
                Op::Sum(a) => {
                    let s = g[0];
                    with_grad(before, *a, |_, ga| {
                        for d in ga.iter_mut() {
                            *d += s;
                        }
                    });
                }
                Op::MeanRows(a) => {
                    let r = before[a.0].value.rows();
                    let c = out.cols();
                    with_grad(before, *a, |_, ga| {
                        for (i, d) in ga.iter_mut().enumerate() {
                            *d += g[i % c] / r as f64;
                        }
                    });
                }
                Op::Nll { p, targets } => {
                    let s = g[0] / targets.len() as f64;
                    with_grad(before, *p, |ns, gp| {
                        let vp = &ns[p.0].value;
                        let c = vp.cols();
                        for (row, &t) in targets.iter().enumerate() {
                            let prob = vp.data()[row * c + t];
                            if prob > LOG_EPS {
                                gp[row * c + t] -= s / prob;
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }

    /// Adds the gradient of every parameter node into `grads`.
    pub fn accumulate_param_grads(&self, grads: &mut Gradients) {
        for node in &self.nodes {
            if let (Op::Param(id), Some(g)) = (&node.op, node.grad.as_deref()) {
                add_into(grads.get_mut(*id), g);
            }
        }
    }
}
