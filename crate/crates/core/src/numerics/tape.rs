use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    BatchMatMul { a: Var, b: Var, trans_b: bool, batch: usize, m: usize, k: usize, n: usize },
    Add { a: Var, b: Var },
    AddRowBroadcast { a: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Relu { a: Var },
    Softmax { a: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Reshape { a: Var },
    Transpose { a: Var, rows: usize, cols: usize },
    SwapAxes12 { a: Var, dims: [usize; 4] },
    GatherRows { table: Var, ids: Vec<usize> },
    ConcatCols { a: Var, b: Var, left: usize, right: usize },
    Sum { a: Var },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<f64>, count: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of tensor operations for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    /// Drops every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Records `t` as an input; its `requires_grad` flag is kept.
    pub fn leaf(&mut self, mut t: Tensor) -> Var {
        t.grad = None;
        self.push(t, Op::Leaf)
    }

    /// Records a trainable input.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.leaf(t.clone().with_grad())
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value.data
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_result(&mut self, shape: &[usize], data: Vec<f64>, inputs: &[Var], op: Op) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.needs_grad(v));
        let value = Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad,
            grad: None,
        };
        self.push(value, op)
    }

    /// `[m×k]·[k×n] → [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, 0.0);
        Ok(self.push_result(&[m, n], out, &[a, b], Op::MatMul { a, b, m, k, n }))
    }

    /// Batched product of `[B, m, k]` with `[B, k, n]`, or with `[B, n, k]`
    /// read transposed when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::shape("batch_matmul", sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (bk, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if bk != k {
            return Err(Error::shape("batch_matmul", sa, sb));
        }
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.data(a), self.data(b));
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &da[i * m * k..(i + 1) * m * k],
                false,
                &db[i * k * n..(i + 1) * k * n],
                trans_b,
                &mut out[i * m * n..(i + 1) * m * n],
                0.0,
            );
        }
        let op = Op::BatchMatMul { a, b, trans_b, batch, m, k, n };
        Ok(self.push_result(&[batch, m, n], out, &[a, b], op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_result(&shape, out, &[a, b], Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_result(&shape, out, &[a, b], Op::Mul { a, b }))
    }

    /// Adds a `[n]` vector to every length-`n` row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.len() != 1 || sa.last() != Some(&sb[0]) {
            return Err(Error::shape("add_bias", sa, sb));
        }
        let n = sb[0];
        let bv = self.data(bias);
        let out = self.data(a).iter().enumerate().map(|(i, x)| x + bv[i % n]).collect();
        let shape = sa.to_vec();
        Ok(self.push_result(&shape, out, &[a, bias], Op::AddRowBroadcast { a, bias }))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.data(a).iter().map(|x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        self.push_result(&shape, out, &[a], Op::Scale { a, factor })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.data(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let shape = self.shape(a).to_vec();
        self.push_result(&shape, out, &[a], Op::Relu { a })
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", &shape, &[axis]));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data(a);
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..len {
                    let e = (x[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[at(j)] /= sum;
                }
            }
        }
        Ok(self.push_result(&shape, out, &[a], Op::Softmax { a, outer, len, inner }))
    }

    /// Normalizes each last-axis slice to zero mean and unit variance, then
    /// applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap_or(&0);
        if d == 0 {
            return Err(Error::shape("layer_norm", &sx, &[]));
        }
        for v in [gain, bias] {
            if self.shape(v) != [d] {
                return Err(Error::shape("layer_norm", &sx, self.shape(v)));
            }
        }
        let rows = self.data(x).len() / d;
        let (xs, g, b) = (self.data(x), self.data(gain), self.data(bias));
        let mut xhat = vec![0.0; xs.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xs.len()];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            rstd[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let op = Op::LayerNorm { x, gain, bias, xhat, rstd };
        Ok(self.push_result(&sx, out, &[x, gain, bias], op))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.data(a).len() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(a), shape));
        }
        let out = self.data(a).to_vec();
        Ok(self.push_result(shape, out, &[a], Op::Reshape { a }))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::shape("transpose", s, &[]));
        }
        let (rows, cols) = (s[0], s[1]);
        let x = self.data(a);
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = x[r * cols + c];
            }
        }
        Ok(self.push_result(&[cols, rows], out, &[a], Op::Transpose { a, rows, cols }))
    }

    /// `[d0, d1, d2, d3] → [d0, d2, d1, d3]`.
    pub fn swap_axes12(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 4 {
            return Err(Error::shape("swap_axes12", s, &[]));
        }
        let dims = [s[0], s[1], s[2], s[3]];
        let out = swap12(self.data(a), dims);
        let shape = [dims[0], dims[2], dims[1], dims[3]];
        Ok(self.push_result(&shape, out, &[a], Op::SwapAxes12 { a, dims }))
    }

    /// Selects rows of a `[n×d]` table; the result is `[ids.len()×d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 || ids.is_empty() {
            return Err(Error::shape("gather_rows", s, &[ids.len()]));
        }
        let (n, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::Range { what: "row id", index: bad, limit: n });
        }
        let t = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let op = Op::GatherRows { table, ids: ids.to_vec() };
        Ok(self.push_result(&[ids.len(), d], out, &[table], op))
    }

    /// Column-wise concatenation of `[m×p]` and `[m×q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::shape("concat_cols", sa, sb));
        }
        let (m, left, right) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(m * (left + right));
        for r in 0..m {
            out.extend_from_slice(&da[r * left..(r + 1) * left]);
            out.extend_from_slice(&db[r * right..(r + 1) * right]);
        }
        let op = Op::ConcatCols { a, b, left, right };
        Ok(self.push_result(&[m, left + right], out, &[a, b], op))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push_result(&[1], vec![s], &[a], Op::Sum { a })
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `[N×V]` logits. `None` targets are padding and excluded from the mean.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::shape("cross_entropy", &s, &[targets.len()]));
        }
        let (rows, vocab) = (s[0], s[1]);
        let count = targets.iter().flatten().count();
        if count == 0 {
            return Err(Error::DegenerateBatch("every target position is padding".into()));
        }
        if let Some(&bad) = targets.iter().flatten().find(|&&t| t >= vocab) {
            return Err(Error::Range { what: "target id", index: bad, limit: vocab });
        }
        let x = self.data(logits);
        let mut probs = vec![0.0; rows * vocab];
        let mut total = 0.0;
        for (r, target) in targets.iter().enumerate() {
            let row = &x[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            for j in 0..vocab {
                probs[r * vocab + j] = (row[j] - log_z).exp();
            }
            if let Some(t) = *target {
                total -= row[t] - log_z;
            }
        }
        let loss = total / count as f64;
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), probs, count };
        Ok(self.push_result(&[1], vec![loss], &[logits], op))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// Propagates d(loss)/d(node) to every recorded node, newest first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.nodes[loss.0].value.data.len();
        if numel != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.value.grad = None;
        }
        if !self.needs_grad(loss) {
            return Ok(());
        }
        self.nodes[loss.0].value.grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].value.grad.take() else {
                continue;
            };
            let (before, rest) = self.nodes.split_at_mut(i);
            propagate(&rest[0], &g, before);
            self.nodes[i].value.grad = Some(g);
        }
        Ok(())
    }
}

fn swap12(x: &[f64], [d0, d1, d2, d3]: [usize; 4]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for a in 0..d0 {
        for b in 0..d1 {
            for c in 0..d2 {
                let src = ((a * d1 + b) * d2 + c) * d3;
                let dst = ((a * d2 + c) * d1 + b) * d3;
                out[dst..dst + d3].copy_from_slice(&x[src..src + d3]);
            }
        }
    }
    out
}

/// Runs `f` on the gradient buffer of `v` (allocated on first use) when `v`
/// requires a gradient.
fn accumulate(nodes: &mut [Node], v: Var, f: impl FnOnce(&mut [f64], &[Node])) {
    if !nodes[v.0].value.requires_grad {
        return;
    }
    let mut buf = nodes[v.0]
        .value
        .grad
        .take()
        .unwrap_or_else(|| vec![0.0; nodes[v.0].value.data.len()]);
    f(&mut buf, nodes);
    nodes[v.0].value.grad = Some(buf);
}

fn val(nodes: &[Node], v: Var) -> &[f64] {
    &nodes[v.0].value.data
}

fn propagate(node: &Node, g: &[f64], nodes: &mut [Node]) {
    let out = &node.value.data;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul { a, b, m, k, n } => {
            accumulate(nodes, a, |ga, ns| gemm(m, n, k, g, false, val(ns, b), true, ga, 1.0));
            accumulate(nodes, b, |gb, ns| gemm(k, m, n, val(ns, a), true, g, false, gb, 1.0));
        }
        &Op::BatchMatMul { a, b, trans_b, batch, m, k, n } => {
            accumulate(nodes, a, |ga, ns| {
                let bv = val(ns, b);
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let bi = &bv[i * k * n..(i + 1) * k * n];
                    // dA = dC · B_effᵀ, where B_eff is the logical [k×n] operand.
                    gemm(m, n, k, gi, false, bi, !trans_b, &mut ga[i * m * k..(i + 1) * m * k], 1.0);
                }
            });
            accumulate(nodes, b, |gb, ns| {
                let av = val(ns, a);
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &av[i * m * k..(i + 1) * m * k];
                    let dst = &mut gb[i * k * n..(i + 1) * k * n];
                    if trans_b {
                        gemm(n, m, k, gi, true, ai, false, dst, 1.0);
                    } else {
                        gemm(k, m, n, ai, true, gi, false, dst, 1.0);
                    }
                }
            });
        }
        &Op::Add { a, b } => {
            for v in [a, b] {
                accumulate(nodes, v, |gv, _| add_into(gv, g));
            }
        }
        &Op::AddRowBroadcast { a, bias } => {
            accumulate(nodes, a, |ga, _| add_into(ga, g));
            accumulate(nodes, bias, |gb, _| {
                let n = gb.len();
                for (i, x) in g.iter().enumerate() {
                    gb[i % n] += x;
                }
            });
        }
        &Op::Mul { a, b } => {
            accumulate(nodes, a, |ga, ns| {
                for ((d, x), y) in ga.iter_mut().zip(g).zip(val(ns, b)) {
                    *d += x * y;
                }
            });
            accumulate(nodes, b, |gb, ns| {
                for ((d, x), y) in gb.iter_mut().zip(g).zip(val(ns, a)) {
                    *d += x * y;
                }
            });
        }
        &Op::Scale { a, factor } => {
            accumulate(nodes, a, |ga, _| {
                for (d, x) in ga.iter_mut().zip(g) {
                    *d += x * factor;
                }
            });
        }
        &Op::Relu { a } => {
            accumulate(nodes, a, |ga, ns| {
                for ((d, x), inp) in ga.iter_mut().zip(g).zip(val(ns, a)) {
                    if *inp > 0.0 {
                        *d += x;
                    }
                }
            });
        }
        &Op::Softmax { a, outer, len, inner } => {
            accumulate(nodes, a, |ga, _| {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g[at(j)] * out[at(j)]).sum();
                        for j in 0..len {
                            ga[at(j)] += out[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            });
        }
        Op::LayerNorm { x, gain, bias, xhat, rstd } => {
            let d = node.value.shape.last().copied().unwrap_or(1);
            let rows = rstd.len();
            accumulate(nodes, *gain, |gg, _| {
                for (i, (x, h)) in g.iter().zip(xhat).enumerate() {
                    gg[i % d] += x * h;
                }
            });
            accumulate(nodes, *bias, |gb, _| {
                for (i, x) in g.iter().enumerate() {
                    gb[i % d] += x;
                }
            });
            accumulate(nodes, *x, |gx, ns| {
                let gain = val(ns, *gain);
                let mut dh = vec![0.0; d];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    for j in 0..d {
                        dh[j] = gr[j] * gain[j];
                    }
                    let mean_dh = dh.iter().sum::<f64>() / d as f64;
                    let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        gx[r * d + j] += rstd[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            });
        }
        &Op::Reshape { a } => {
            accumulate(nodes, a, |ga, _| add_into(ga, g));
        }
        &Op::Transpose { a, rows, cols } => {
            accumulate(nodes, a, |ga, _| {
                for r in 0..rows {
                    for c in 0..cols {
                        ga[r * cols + c] += g[c * rows + r];
                    }
                }
            });
        }
        &Op::SwapAxes12 { a, dims } => {
            accumulate(nodes, a, |ga, _| {
                let back = swap12(g, [dims[0], dims[2], dims[1], dims[3]]);
                add_into(ga, &back);
            });
        }
        Op::GatherRows { table, ids } => {
            let d = node.value.shape[1];
            accumulate(nodes, *table, |gt, _| {
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                }
            });
        }
        &Op::ConcatCols { a, b, left, right } => {
            let width = left + right;
            accumulate(nodes, a, |ga, _| {
                for (r, row) in ga.chunks_mut(left).enumerate() {
                    add_into(row, &g[r * width..r * width + left]);
                }
            });
            accumulate(nodes, b, |gb, _| {
                for (r, row) in gb.chunks_mut(right).enumerate() {
                    add_into(row, &g[r * width + left..(r + 1) * width]);
                }
            });
        }
        &Op::Sum { a } => {
            accumulate(nodes, a, |ga, _| {
                for d in ga.iter_mut() {
                    *d += g[0];
                }
            });
        }
        Op::CrossEntropy { logits, targets, probs, count } => {
            let scale = g[0] / *count as f64;
            accumulate(nodes, *logits, |gl, _| {
                let vocab = probs.len() / targets.len();
                for (r, target) in targets.iter().enumerate() {
                    let Some(t) = *target else { continue };
                    for j in 0..vocab {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        gl[r * vocab + j] += scale * (probs[r * vocab + j] - onehot);
                    }
                }
            });
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
