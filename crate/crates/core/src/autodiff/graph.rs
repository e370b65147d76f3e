use super::array::{matmul_acc, matmul_at_acc, matmul_bt_acc, Array};
use super::grl::GrlCoefficient;
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Logits are clamped to this magnitude inside [`Graph::bce_with_logits`].
pub const LOGIT_CLAMP: f64 = 15.0;

/// Default negative slope of [`Graph::leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Handle to a node of a [`Graph`].
///
/// Handles are only meaningful for the graph that created them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn node_id(self) -> usize {
        self.0
    }

    pub(crate) fn from_node(id: usize) -> Self {
        Tensor(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bin {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Binary(Bin, usize, usize),
    AddBias(usize, usize),
    ScalarMul(usize, f64),
    Square(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Log(usize),
    Exp(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    Concat {
        a: usize,
        b: usize,
        outer: usize,
        a_inner: usize,
        b_inner: usize,
    },
    Grl(usize, f64),
    Patches {
        src: usize,
        height: usize,
        width: usize,
        channels: usize,
        dilation: usize,
    },
    GatherRows(usize, Vec<usize>),
    MeanRows(usize),
    SliceCols(usize, usize, usize),
    Reshape(usize),
    BceWithLogits(usize, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so insertion order is a valid
/// topological order. [`Graph::backward`] may run once; the graph is meant to
/// be discarded after the parameter gradients have been collected.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, ParamId)>,
    backward_done: bool,
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

    fn push(&mut self, value: Array, op: Op, requires_grad: bool) -> Tensor {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Tensor(self.nodes.len() - 1)
    }

    fn rg(&self, t: usize) -> bool {
        self.nodes[t].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, value: Array) -> Tensor {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array) -> Tensor {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Tensor {
        self.constant(Array::scalar(v))
    }

    /// Copies a parameter into the graph and remembers the binding so
    /// [`ParamStore::accumulate`] can collect its gradient after backward.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Tensor {
        let t = self.leaf(store.value(id).clone());
        self.params.push((t.0, id));
        t
    }

    pub(crate) fn param_bindings(&self) -> &[(usize, ParamId)] {
        &self.params
    }

    pub fn value(&self, t: Tensor) -> &Array {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        self.nodes[t.0].value.shape()
    }

    /// Gradient of the backward root with respect to `t`, once backward has run.
    pub fn grad(&self, t: Tensor) -> Option<&[f64]> {
        self.grads.get(t.0).and_then(|g| g.as_deref())
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.rg(t.0)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let dims = va.dims2().zip(vb.dims2());
        let Some(((m, k), (k2, n))) = dims.filter(|((_, k), (k2, _))| k == k2) else {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        };
        debug_assert_eq!(k, k2);
        let mut out = vec![0.0; m * n];
        matmul_acc(va.data(), vb.data(), &mut out, m, k, n);
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(Array::new(vec![m, n], out)?, Op::MatMul(a.0, b.0), rg))
    }

    fn binary(&mut self, kind: Bin, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let f = |x: f64, y: f64| match kind {
            Bin::Add => x + y,
            Bin::Sub => x - y,
            Bin::Mul => x * y,
        };
        let value = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y));
            Array::new(va.shape().to_vec(), data.collect())?
        } else if vb.is_scalar() {
            let y = vb.item();
            Array::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x, y)).collect())?
        } else if va.is_scalar() {
            let x = va.item();
            Array::new(vb.shape().to_vec(), vb.data().iter().map(|&y| f(x, y)).collect())?
        } else {
            return Err(Error::Dimension {
                op: "elementwise",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        };
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(value, Op::Binary(kind, a.0, b.0), rg))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(Bin::Add, a, b)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(Bin::Sub, a, b)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(Bin::Mul, a, b)
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Tensor, bias: Tensor) -> Result<Tensor> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let n = match (va.dims2(), vb.shape()) {
            (Some((_, n)), [nb]) if n == *nb => n,
            _ => {
                return Err(Error::Dimension {
                    op: "add_bias",
                    lhs: va.shape().to_vec(),
                    rhs: vb.shape().to_vec(),
                })
            }
        };
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            for (x, &b) in row.iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        let value = Array::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a.0) || self.rg(bias.0);
        Ok(self.push(value, Op::AddBias(a.0, bias.0), rg))
    }

    fn unary(&mut self, a: Tensor, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let va = &self.nodes[a.0].value;
        let value = Array::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect())
            .expect("unary preserves shape");
        let rg = self.rg(a.0);
        self.push(value, op, rg)
    }

    pub fn scalar_mul(&mut self, a: Tensor, c: f64) -> Tensor {
        self.unary(a, Op::ScalarMul(a.0, c), |x| c * x)
    }

    pub fn square(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Square(a.0), |x| x * x)
    }

    pub fn leaky_relu(&mut self, a: Tensor) -> Tensor {
        self.leaky_relu_with(a, LEAKY_SLOPE)
    }

    pub fn leaky_relu_with(&mut self, a: Tensor, slope: f64) -> Tensor {
        self.unary(a, Op::LeakyRelu(a.0, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Sigmoid(a.0), sigmoid)
    }

    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        if let Some(&bad) = self.nodes[a.0].value.data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::Domain {
                op: "log",
                value: bad,
            });
        }
        Ok(self.unary(a, Op::Log(a.0), f64::ln))
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Exp(a.0), f64::exp)
    }

    pub fn abs(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Abs(a.0), f64::abs)
    }

    fn reduce(&mut self, a: Tensor, mean: bool) -> Result<Tensor> {
        let va = &self.nodes[a.0].value;
        if va.is_empty() {
            return Err(Error::Precondition(format!(
                "reduce over empty tensor of shape {:?}",
                va.shape()
            )));
        }
        let s: f64 = va.data().iter().sum();
        let v = if mean { s / va.len() as f64 } else { s };
        let rg = self.rg(a.0);
        let op = if mean { Op::Mean(a.0) } else { Op::Sum(a.0) };
        Ok(self.push(Array::scalar(v), op, rg))
    }

    pub fn sum(&mut self, a: Tensor) -> Result<Tensor> {
        self.reduce(a, false)
    }

    pub fn mean(&mut self, a: Tensor) -> Result<Tensor> {
        self.reduce(a, true)
    }

    /// Joins two tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, a: Tensor, b: Tensor, axis: usize) -> Result<Tensor> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (va.shape(), vb.shape());
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa.iter().zip(sb).enumerate().all(|(d, (x, y))| d == axis || x == y);
        if !compatible {
            return Err(Error::Dimension {
                op: "concat",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let outer: usize = sa[..axis].iter().product();
        let a_inner: usize = sa[axis..].iter().product();
        let b_inner: usize = sb[axis..].iter().product();
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for o in 0..outer {
            data.extend_from_slice(&va.data()[o * a_inner..(o + 1) * a_inner]);
            data.extend_from_slice(&vb.data()[o * b_inner..(o + 1) * b_inner]);
        }
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let value = Array::new(shape, data)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        let op = Op::Concat {
            a: a.0,
            b: b.0,
            outer,
            a_inner,
            b_inner,
        };
        Ok(self.push(value, op, rg))
    }

    /// Stacks rank-2 tensors with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::Precondition("concat_rows of nothing".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.concat(acc, t, 0))
    }

    /// Gradient reversal: identity forward, `-coeff.value(progress)` times the
    /// upstream gradient backward.
    pub fn grl(&mut self, a: Tensor, coeff: &GrlCoefficient, progress: f64) -> Tensor {
        assert!(
            (0.0..=1.0).contains(&progress),
            "training progress {progress} outside [0, 1]"
        );
        let lambda = coeff.value(progress);
        let value = self.nodes[a.0].value.clone();
        let rg = self.rg(a.0);
        self.push(value, Op::Grl(a.0, lambda), rg)
    }

    /// Extracts `3×3` neighbourhoods of an `H·W × C` cell-feature matrix with
    /// zero "same" padding. Output is `H·W × 9C`, columns ordered by
    /// `(row offset, column offset, channel)`.
    pub fn patches3x3(
        &mut self,
        src: Tensor,
        height: usize,
        width: usize,
        dilation: usize,
    ) -> Result<Tensor> {
        let v = &self.nodes[src.0].value;
        let Some((cells, channels)) = v.dims2().filter(|(r, _)| *r == height * width) else {
            return Err(Error::Dimension {
                op: "patches3x3",
                lhs: v.shape().to_vec(),
                rhs: vec![height, width],
            });
        };
        debug_assert_eq!(cells, height * width);
        let k = 9 * channels;
        let mut out = vec![0.0; cells * k];
        let d = dilation as isize;
        let src_data = v.data();
        for i in 0..height {
            for j in 0..width {
                let row = &mut out[(i * width + j) * k..(i * width + j + 1) * k];
                for (slot, (di, dj)) in offsets3x3().enumerate() {
                    let (si, sj) = (i as isize + di * d, j as isize + dj * d);
                    if si < 0 || sj < 0 || si >= height as isize || sj >= width as isize {
                        continue;
                    }
                    let s = si as usize * width + sj as usize;
                    row[slot * channels..(slot + 1) * channels]
                        .copy_from_slice(&src_data[s * channels..(s + 1) * channels]);
                }
            }
        }
        let value = Array::new(vec![cells, k], out)?;
        let rg = self.rg(src.0);
        let op = Op::Patches {
            src: src.0,
            height,
            width,
            channels,
            dilation,
        };
        Ok(self.push(value, op, rg))
    }

    /// Selects rows of a rank-2 tensor (repeats allowed).
    pub fn gather_rows(&mut self, src: Tensor, rows: &[usize]) -> Result<Tensor> {
        let v = &self.nodes[src.0].value;
        let Some((n, c)) = v.dims2() else {
            return Err(Error::Dimension {
                op: "gather_rows",
                lhs: v.shape().to_vec(),
                rhs: vec![],
            });
        };
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::Precondition(format!("row {bad} out of range {n}")));
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            data.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
        }
        let value = Array::new(vec![rows.len(), c], data)?;
        let rg = self.rg(src.0);
        Ok(self.push(value, Op::GatherRows(src.0, rows.to_vec()), rg))
    }

    /// Column-wise mean of an `n×c` tensor, producing `1×c`.
    pub fn mean_rows(&mut self, src: Tensor) -> Result<Tensor> {
        let v = &self.nodes[src.0].value;
        let Some((n, c)) = v.dims2().filter(|(n, _)| *n > 0) else {
            return Err(Error::Precondition(format!(
                "mean_rows over shape {:?}",
                v.shape()
            )));
        };
        let mut out = vec![0.0; c];
        for row in v.data().chunks(c.max(1)) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let value = Array::new(vec![1, c], out)?;
        let rg = self.rg(src.0);
        Ok(self.push(value, Op::MeanRows(src.0), rg))
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, src: Tensor, start: usize, end: usize) -> Result<Tensor> {
        let v = &self.nodes[src.0].value;
        let Some((n, c)) = v.dims2().filter(|(_, c)| start < end && end <= *c) else {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: v.shape().to_vec(),
                rhs: vec![start, end],
            });
        };
        let w = end - start;
        let mut data = Vec::with_capacity(n * w);
        for row in v.data().chunks(c) {
            data.extend_from_slice(&row[start..end]);
        }
        let value = Array::new(vec![n, w], data)?;
        let rg = self.rg(src.0);
        Ok(self.push(value, Op::SliceCols(src.0, start, end), rg))
    }

    pub fn reshape(&mut self, src: Tensor, shape: &[usize]) -> Result<Tensor> {
        let value = self.nodes[src.0].value.clone().reshaped(shape)?;
        let rg = self.rg(src.0);
        Ok(self.push(value, Op::Reshape(src.0), rg))
    }

    /// Elementwise binary cross-entropy between `sigmoid(logits)` and fixed
    /// targets in `[0, 1]`. Logits are clamped to `±LOGIT_CLAMP`.
    pub fn bce_with_logits(&mut self, logits: Tensor, targets: &Array) -> Result<Tensor> {
        let v = &self.nodes[logits.0].value;
        if v.shape() != targets.shape() {
            return Err(Error::Dimension {
                op: "bce_with_logits",
                lhs: v.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        let data = v
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&x, &t)| {
                let x = x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
                softplus(x) - t * x
            })
            .collect();
        let value = Array::new(v.shape().to_vec(), data)?;
        let rg = self.rg(logits.0);
        let op = Op::BceWithLogits(logits.0, targets.data().to_vec());
        Ok(self.push(value, op, rg))
    }

    /// Reverse-mode sweep from a scalar root. Runs at most once per graph.
    pub fn backward(&mut self, root: Tensor) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::Precondition(format!(
                "backward from non-scalar of shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_deref() else {
                continue;
            };
            self.backprop_node(i, g, lower);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], lower: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |t: usize| &nodes[t].value;
        let needs = |t: usize| nodes[t].requires_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2().unwrap();
                let n = val(*b).dims2().unwrap().1;
                if needs(*a) {
                    matmul_bt_acc(g, val(*b).data(), slot(lower, *a, m * k), m, k, n);
                }
                if needs(*b) {
                    matmul_at_acc(val(*a).data(), g, slot(lower, *b, k * n), m, k, n);
                }
            }
            Op::Binary(kind, a, b) => {
                let (a, b) = (*a, *b);
                let out_len = g.len();
                for (side, this, other) in [(0, a, b), (1, b, a)] {
                    if !needs(this) {
                        continue;
                    }
                    let vt = val(this);
                    let vo = val(other);
                    // local derivative of the output w.r.t. this operand at element e
                    let local = |e: usize| -> f64 {
                        match kind {
                            Bin::Add => 1.0,
                            Bin::Sub => {
                                if side == 0 {
                                    1.0
                                } else {
                                    -1.0
                                }
                            }
                            Bin::Mul => {
                                if vo.len() == out_len {
                                    vo.data()[e]
                                } else {
                                    vo.item()
                                }
                            }
                        }
                    };
                    let dst = slot(lower, this, vt.len());
                    if vt.len() == out_len {
                        for (e, d) in dst.iter_mut().enumerate() {
                            *d += g[e] * local(e);
                        }
                    } else {
                        // broadcast scalar operand
                        let s: f64 = (0..out_len).map(|e| g[e] * local(e)).sum();
                        dst[0] += s;
                    }
                }
            }
            Op::AddBias(a, b) => {
                if needs(*a) {
                    add_into(slot(lower, *a, g.len()), g);
                }
                if needs(*b) {
                    let n = val(*b).len();
                    let dst = slot(lower, *b, n);
                    for row in g.chunks(n.max(1)) {
                        add_into(dst, row);
                    }
                }
            }
            Op::ScalarMul(a, c) => {
                let dst = slot(lower, *a, g.len());
                for (d, &gv) in dst.iter_mut().zip(g) {
                    *d += c * gv;
                }
            }
            Op::Square(a) => {
                let x = val(*a).data();
                let dst = slot(lower, *a, g.len());
                for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(x) {
                    *d += 2.0 * xv * gv;
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = val(*a).data();
                let dst = slot(lower, *a, g.len());
                for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(x) {
                    *d += if xv > 0.0 { gv } else { slope * gv };
                }
            }
            Op::Sigmoid(a) => {
                let y = nodes[i].value.data();
                let dst = slot(lower, *a, g.len());
                for ((d, &gv), &yv) in dst.iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (1.0 - yv);
                }
            }
            Op::Log(a) => {
                let x = val(*a).data();
                let dst = slot(lower, *a, g.len());
                for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(x) {
                    *d += gv / xv;
                }
            }
            Op::Exp(a) => {
                let y = nodes[i].value.data();
                let dst = slot(lower, *a, g.len());
                for ((d, &gv), &yv) in dst.iter_mut().zip(g).zip(y) {
                    *d += gv * yv;
                }
            }
            Op::Abs(a) => {
                let x = val(*a).data();
                let dst = slot(lower, *a, g.len());
                for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(x) {
                    *d += gv * sign(xv);
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                let n = val(*a).len();
                let scale = if matches!(nodes[i].op, Op::Mean(_)) {
                    g[0] / n as f64
                } else {
                    g[0]
                };
                for d in slot(lower, *a, n).iter_mut() {
                    *d += scale;
                }
            }
            Op::Concat {
                a,
                b,
                outer,
                a_inner,
                b_inner,
            } => {
                let stride = a_inner + b_inner;
                if needs(*a) {
                    let dst = slot(lower, *a, outer * a_inner);
                    for o in 0..*outer {
                        add_into(
                            &mut dst[o * a_inner..(o + 1) * a_inner],
                            &g[o * stride..o * stride + a_inner],
                        );
                    }
                }
                if needs(*b) {
                    let dst = slot(lower, *b, outer * b_inner);
                    for o in 0..*outer {
                        add_into(
                            &mut dst[o * b_inner..(o + 1) * b_inner],
                            &g[o * stride + a_inner..(o + 1) * stride],
                        );
                    }
                }
            }
            Op::Grl(a, lambda) => {
                let factor = -lambda;
                let dst = slot(lower, *a, g.len());
                for (d, &gv) in dst.iter_mut().zip(g) {
                    *d += factor * gv;
                }
            }
            Op::Patches {
                src,
                height,
                width,
                channels,
                dilation,
            } => {
                let (h, w, c) = (*height, *width, *channels);
                let k = 9 * c;
                let d = *dilation as isize;
                let dst = slot(lower, *src, h * w * c);
                for i in 0..h {
                    for j in 0..w {
                        let row = &g[(i * w + j) * k..(i * w + j + 1) * k];
                        for (s, (di, dj)) in offsets3x3().enumerate() {
                            let (si, sj) = (i as isize + di * d, j as isize + dj * d);
                            if si < 0 || sj < 0 || si >= h as isize || sj >= w as isize {
                                continue;
                            }
                            let cell = si as usize * w + sj as usize;
                            add_into(&mut dst[cell * c..(cell + 1) * c], &row[s * c..(s + 1) * c]);
                        }
                    }
                }
            }
            Op::GatherRows(src, rows) => {
                let (n, c) = val(*src).dims2().unwrap();
                let dst = slot(lower, *src, n * c);
                for (r, &row) in rows.iter().enumerate() {
                    add_into(&mut dst[row * c..(row + 1) * c], &g[r * c..(r + 1) * c]);
                }
            }
            Op::MeanRows(src) => {
                let (n, c) = val(*src).dims2().unwrap();
                let inv = 1.0 / n as f64;
                let dst = slot(lower, *src, n * c);
                for row in dst.chunks_mut(c.max(1)) {
                    for (d, &gv) in row.iter_mut().zip(g) {
                        *d += gv * inv;
                    }
                }
            }
            Op::SliceCols(src, start, end) => {
                let (n, c) = val(*src).dims2().unwrap();
                let wdt = end - start;
                let dst = slot(lower, *src, n * c);
                for r in 0..n {
                    add_into(
                        &mut dst[r * c + start..r * c + end],
                        &g[r * wdt..(r + 1) * wdt],
                    );
                }
            }
            Op::Reshape(src) => {
                add_into(slot(lower, *src, g.len()), g);
            }
            Op::BceWithLogits(src, targets) => {
                let x = val(*src).data();
                let dst = slot(lower, *src, g.len());
                for (((d, &gv), &xv), &t) in dst.iter_mut().zip(g).zip(x).zip(targets) {
                    if xv.abs() < LOGIT_CLAMP {
                        *d += gv * (sigmoid(xv) - t);
                    }
                }
            }
        }
    }
}

fn slot(lower: &mut [Option<Vec<f64>>], t: usize, len: usize) -> &mut [f64] {
    lower[t].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn offsets3x3() -> impl Iterator<Item = (isize, isize)> {
    (-1..=1).flat_map(|di| (-1..=1).map(move |dj| (di, dj)))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
