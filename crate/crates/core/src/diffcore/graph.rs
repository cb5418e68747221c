use std::collections::HashMap;

use super::tensor::gemm;
use super::{DResult, DiffError, ParamId, ParamStore, Tensor};

/// Slope of the fast-sigmoid surrogate.
pub const SURROGATE_SLOPE: f64 = 25.0;

/// Fast-sigmoid surrogate derivative `1 / (1 + k|u|)²`.
#[inline]
pub fn surrogate_grad(u: f64) -> f64 {
    let d = 1.0 + SURROGATE_SLOPE * u.abs();
    1.0 / (d * d)
}

/// Forward behaviour of the spike op. `Smoothed` replaces the step with
/// `u / (1 + k|u|)`, whose exact derivative is the surrogate, so finite
/// differences can check the backward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SpikeMode {
    #[default]
    Heaviside,
    Smoothed,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    CrossEntropyRows { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Mse(Var, Var),
    L1(Var),
    Sum(Var),
    Mean(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Spike(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Per-parameter gradients aligned with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Grads {
    pub tensors: Vec<Tensor>,
    /// Parameters that did not influence the loss (their gradient is zero).
    pub disconnected: Vec<String>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads { tensors: store.ids().map(|i| Tensor::zeros(&store.get(i).shape)).collect(), disconnected: vec![] }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }
}

/// Reverse-mode tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Tensor>>,
    pub spike_mode: SpikeMode,
}

fn shape_err<T>(op: &'static str, detail: String) -> DResult<T> {
    Err(DiffError::Shape { op, detail })
}

/// Output shape for suffix broadcasting: the shorter shape must be a suffix
/// of the longer one.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> DResult<Vec<usize>> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if long[long.len() - short.len()..] != *short {
        return shape_err(op, format!("{a:?} vs {b:?}"));
    }
    Ok(long.to_vec())
}

/// Sums `g` (shaped like the broadcast output) down to a tensor of `len`
/// elements by folding repeats.
fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if g.len() == len {
        return g.to_vec();
    }
    let mut out = vec![0.0; len];
    for chunk in g.chunks(len) {
        out.iter_mut().zip(chunk).for_each(|(o, v)| *o += v);
    }
    out
}

/// (outer, axis length, inner) factorization of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_spike_mode(mode: SpikeMode) -> Self {
        Graph { spike_mode: mode, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> DResult<Var> {
        if !value.all_finite() {
            return Err(DiffError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor) -> DResult<Var> {
        self.push(t, Op::Input, "input")
    }

    /// Parameter leaf; repeated calls with the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node { value: store.get(id).clone(), op: Op::Param(id) });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    /// Parameter leaf with an externally supplied value (used for sampled
    /// weights that should still receive gradients under the same id).
    pub fn param_value(&mut self, id: ParamId, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Param(id) });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> DResult<Var> {
        let (sa, sb) = (&self.value(a).shape, &self.value(b).shape);
        let (m, k, k2, n) = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [k2, n]) => (*m, *k, *k2, *n),
            _ => return shape_err("matmul", format!("rank-2 operands required, got {sa:?} and {sb:?}")),
        };
        if k != k2 {
            return shape_err("matmul", format!("{sa:?} x {sb:?}"));
        }
        let mut out = vec![0.0; m * n];
        gemm(&self.value(a).data, false, &self.value(b).data, false, m, k, n, &mut out, false);
        self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), "matmul")
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> DResult<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(name, &ta.shape, &tb.shape)?;
        let n: usize = shape.iter().product();
        let (la, lb) = (ta.len(), tb.len());
        let data = if la == n && lb == n {
            ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect()
        } else {
            (0..n).map(|i| f(ta.data[i % la], tb.data[i % lb])).collect()
        };
        Ok(Tensor { shape, data })
    }

    /// Elementwise sum; the smaller operand broadcasts over leading dims.
    pub fn add(&mut self, a: Var, b: Var) -> DResult<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        self.push(t, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> DResult<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push(t, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> DResult<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push(t, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> DResult<Var> {
        let t = self.value(a);
        let t = Tensor { shape: t.shape.clone(), data: t.data.iter().map(|x| x * c).collect() };
        self.push(t, Op::Scale(a, c), "scale")
    }

    fn unary(&mut self, a: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> DResult<Var> {
        let t = self.value(a);
        let t = Tensor { shape: t.shape.clone(), data: t.data.iter().map(|&x| f(x)).collect() };
        self.push(t, op, name)
    }

    pub fn relu(&mut self, a: Var) -> DResult<Var> {
        self.unary(a, Op::Relu(a), "relu", |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> DResult<Var> {
        self.unary(a, Op::Tanh(a), "tanh", f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> DResult<Var> {
        self.unary(a, Op::Sigmoid(a), "sigmoid", |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn exp(&mut self, a: Var) -> DResult<Var> {
        self.unary(a, Op::Exp(a), "exp", f64::exp)
    }

    /// Spike nonlinearity of `u = mem − θ`.
    pub fn spike(&mut self, u: Var) -> DResult<Var> {
        match self.spike_mode {
            SpikeMode::Heaviside => self.unary(u, Op::Spike(u), "spike", |x| if x > 0.0 { 1.0 } else { 0.0 }),
            SpikeMode::Smoothed => {
                self.unary(u, Op::Spike(u), "spike", |x| x / (1.0 + SURROGATE_SLOPE * x.abs()))
            }
        }
    }

    /// Per-row layer normalization with learnable gain and bias (ε = 1e-5).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> DResult<Var> {
        const EPS: f64 = 1e-5;
        let tx = self.value(x);
        let (rows, d) = tx.dims2();
        if self.value(gain).shape != [d] || self.value(bias).shape != [d] {
            return shape_err("layer_norm", format!("gain/bias must be [{d}]"));
        }
        let (g, b) = (&self.value(gain).data, &self.value(bias).data);
        let mut xhat = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let row = &tx.data[r * d..(r + 1) * d];
            let m = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - m) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor { shape: tx.shape.clone(), data: out };
        self.push(t, Op::LayerNorm { x, gain, bias, xhat, inv_std }, "layer_norm")
    }

    /// Per-row cross-entropy `logsumexp(z) − z[label]`, shape `[batch]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, labels: &[usize]) -> DResult<Var> {
        let t = self.value(logits);
        let (rows, c) = match t.shape.as_slice() {
            [r, c] => (*r, *c),
            s => return shape_err("cross_entropy", format!("logits must be rank 2, got {s:?}")),
        };
        if labels.len() != rows {
            return shape_err("cross_entropy", format!("{rows} rows vs {} labels", labels.len()));
        }
        let mut probs = vec![0.0; rows * c];
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let l = labels[r];
            if l >= c {
                return Err(DiffError::Label { label: l, classes: c });
            }
            let z = &t.data[r * c..(r + 1) * c];
            let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - mx).exp()).sum();
            for j in 0..c {
                probs[r * c + j] = (z[j] - mx).exp() / s;
            }
            out[r] = mx + s.ln() - z[l];
        }
        let labels = labels.to_vec();
        self.push(Tensor { shape: vec![rows], data: out }, Op::CrossEntropyRows { logits, labels, probs }, "cross_entropy")
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> DResult<Var> {
        let rows = self.cross_entropy_rows(logits, labels)?;
        self.mean(rows)
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> DResult<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return shape_err("mse", format!("{:?} vs {:?}", ta.shape, tb.shape));
        }
        let n = ta.len().max(1) as f64;
        let v = ta.data.iter().zip(&tb.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
        self.push(Tensor::scalar(v), Op::Mse(a, b), "mse")
    }

    /// Mean absolute value over all elements.
    pub fn l1_norm(&mut self, a: Var) -> DResult<Var> {
        let t = self.value(a);
        let v = t.data.iter().map(|x| x.abs()).sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(v), Op::L1(a), "l1_norm")
    }

    pub fn sum(&mut self, a: Var) -> DResult<Var> {
        let v = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> DResult<Var> {
        let t = self.value(a);
        let v = t.data.iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(v), Op::Mean(a), "mean")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> DResult<Var> {
        let first = match inputs.first() {
            Some(v) => self.value(*v).shape.clone(),
            None => return shape_err("concat", "no inputs".into()),
        };
        if axis >= first.len() {
            return shape_err("concat", format!("axis {axis} out of range for {first:?}"));
        }
        let mut total = 0;
        for v in inputs {
            let s = &self.value(*v).shape;
            if s.len() != first.len() || (0..s.len()).any(|i| i != axis && s[i] != first[i]) {
                return shape_err("concat", format!("{s:?} incompatible with {first:?}"));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&first, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let len = t.shape[axis] * inner;
                data.extend_from_slice(&t.data[o * len..(o + 1) * len]);
            }
        }
        self.push(Tensor { shape, data }, Op::Concat { inputs: inputs.to_vec(), axis }, "concat")
    }

    /// `x[.., start..start+len, ..]` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> DResult<Var> {
        let s = self.value(x).shape.clone();
        if axis >= s.len() || start + len > s[axis] {
            return shape_err("slice", format!("{start}+{len} on axis {axis} of {s:?}"));
        }
        let (outer, alen, inner) = split_axis(&s, axis);
        let src = &self.value(x).data;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * alen * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        self.push(Tensor { shape, data }, Op::Slice { x, axis, start }, "slice")
    }

    /// Gradient of a node after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Reverse sweep from a scalar loss. Returns gradients for every
    /// parameter of `store`; untouched parameters get zeros and are listed.
    pub fn backward(&mut self, loss: Var, store: &ParamStore) -> DResult<Grads> {
        let ls = &self.value(loss).shape;
        if self.value(loss).len() != 1 {
            return Err(DiffError::NonScalarLoss(ls.clone()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor { shape: ls.clone(), data: vec![1.0] });
        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut out = Grads::zeros_like(store);
        let mut touched = vec![false; store.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if id.0 >= store.len() {
                    continue;
                }
                if let Some(g) = &grads[i] {
                    out.tensors[id.0].data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
                    touched[id.0] = true;
                }
            }
        }
        for id in store.ids() {
            if !touched[id.0] {
                out.disconnected.push(store.name(id).to_string());
            }
            if !out.tensors[id.0].all_finite() {
                return Err(DiffError::NonFiniteGrad(store.name(id).to_string()));
            }
        }
        self.grads = grads;
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape[0], ta.shape[1]);
                let n = tb.shape[1];
                let ga = acc_buf(grads, *a, &ta.shape);
                gemm(&g.data, false, &tb.data, true, m, n, k, ga, true);
                let gb = acc_buf(grads, *b, &tb.shape);
                gemm(&ta.data, true, &g.data, false, k, m, n, gb, true);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let (sa, sb) = (self.value(*a).shape.clone(), self.value(*b).shape.clone());
                let ra = reduce_to(&g.data, sa.iter().product());
                acc_buf(grads, *a, &sa).iter_mut().zip(&ra).for_each(|(x, y)| *x += y);
                let rb = reduce_to(&g.data, sb.iter().product());
                acc_buf(grads, *b, &sb).iter_mut().zip(&rb).for_each(|(x, y)| *x += sign * y);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (la, lb) = (ta.len(), tb.len());
                let n = g.len();
                let pa: Vec<f64> = (0..n).map(|j| g.data[j] * tb.data[j % lb]).collect();
                let pb: Vec<f64> = (0..n).map(|j| g.data[j] * ta.data[j % la]).collect();
                let ra = reduce_to(&pa, la);
                let rb = reduce_to(&pb, lb);
                acc_buf(grads, *a, &ta.shape).iter_mut().zip(&ra).for_each(|(x, y)| *x += y);
                acc_buf(grads, *b, &tb.shape).iter_mut().zip(&rb).for_each(|(x, y)| *x += y);
            }
            Op::Scale(a, c) => {
                let s = &self.value(*a).shape;
                acc_buf(grads, *a, s).iter_mut().zip(&g.data).for_each(|(x, y)| *x += c * y);
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                let buf = acc_buf(grads, *a, &ta.shape);
                for j in 0..buf.len() {
                    if ta.data[j] > 0.0 {
                        buf[j] += g.data[j];
                    }
                }
            }
            Op::Tanh(a) => elementwise(grads, *a, &val.shape, g, |j| 1.0 - val.data[j] * val.data[j]),
            Op::Sigmoid(a) => elementwise(grads, *a, &val.shape, g, |j| val.data[j] * (1.0 - val.data[j])),
            Op::Exp(a) => elementwise(grads, *a, &val.shape, g, |j| val.data[j]),
            Op::Spike(u) => {
                let tu = self.value(*u);
                elementwise(grads, *u, &tu.shape, g, |j| surrogate_grad(tu.data[j]));
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let tx = self.value(*x);
                let (rows, d) = tx.dims2();
                let gv = &self.value(*gain).data;
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                let mut dx = vec![0.0; rows * d];
                for r in 0..rows {
                    let dy = &g.data[r * d..(r + 1) * d];
                    let xh = &xhat[r * d..(r + 1) * d];
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..d {
                        dg[j] += dy[j] * xh[j];
                        db[j] += dy[j];
                        let dxh = dy[j] * gv[j];
                        s1 += dxh;
                        s2 += dxh * xh[j];
                    }
                    for j in 0..d {
                        let dxh = dy[j] * gv[j];
                        dx[r * d + j] = inv_std[r] / d as f64 * (d as f64 * dxh - s1 - xh[j] * s2);
                    }
                }
                let sx = tx.shape.clone();
                acc_buf(grads, *x, &sx).iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                acc_buf(grads, *gain, &[d]).iter_mut().zip(&dg).for_each(|(a, b)| *a += b);
                acc_buf(grads, *bias, &[d]).iter_mut().zip(&db).for_each(|(a, b)| *a += b);
            }
            Op::CrossEntropyRows { logits, labels, probs } => {
                let s = self.value(*logits).shape.clone();
                let c = s[1];
                let buf = acc_buf(grads, *logits, &s);
                for (r, &l) in labels.iter().enumerate() {
                    for j in 0..c {
                        let ind = if j == l { 1.0 } else { 0.0 };
                        buf[r * c + j] += g.data[r] * (probs[r * c + j] - ind);
                    }
                }
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let n = ta.len().max(1) as f64;
                let d: Vec<f64> = ta.data.iter().zip(&tb.data).map(|(x, y)| 2.0 * (x - y) / n * g.data[0]).collect();
                let s = ta.shape.clone();
                acc_buf(grads, *a, &s).iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                acc_buf(grads, *b, &s).iter_mut().zip(&d).for_each(|(x, y)| *x -= y);
            }
            Op::L1(a) => {
                let ta = self.value(*a);
                let n = ta.len().max(1) as f64;
                let buf = acc_buf(grads, *a, &ta.shape);
                for j in 0..buf.len() {
                    let v = ta.data[j];
                    let sg = if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
                    buf[j] += sg / n * g.data[0];
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                let ta = self.value(*a);
                let scale = if matches!(node.op, Op::Mean(_)) { 1.0 / ta.len().max(1) as f64 } else { 1.0 };
                let gv = g.data[0] * scale;
                acc_buf(grads, *a, &ta.shape).iter_mut().for_each(|x| *x += gv);
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = split_axis(&val.shape, *axis);
                let total = val.shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let s = self.value(*v).shape.clone();
                    let len = s[*axis] * inner;
                    let buf = acc_buf(grads, *v, &s);
                    for o in 0..outer {
                        for j in 0..len {
                            buf[o * len + j] += g.data[o * total + offset + j];
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let s = self.value(*x).shape.clone();
                let (outer, alen, inner) = split_axis(&s, *axis);
                let len = val.shape[*axis] * inner;
                let buf = acc_buf(grads, *x, &s);
                for o in 0..outer {
                    let base = o * alen * inner + start * inner;
                    for j in 0..len {
                        buf[base + j] += g.data[o * len + j];
                    }
                }
            }
        }
    }
}

fn acc_buf<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut [f64] {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)).data.as_mut_slice()
}

fn elementwise(grads: &mut [Option<Tensor>], a: Var, shape: &[usize], g: &Tensor, d: impl Fn(usize) -> f64) {
    let buf = acc_buf(grads, a, shape);
    for j in 0..buf.len() {
        buf[j] += g.data[j] * d(j);
    }
}
