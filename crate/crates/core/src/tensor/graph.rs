use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::{shape_err, Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Gather { table: Var, indices: Vec<usize> },
    MeanPool { x: Var, mask: Vec<f64>, counts: Vec<f64> },
    MaxPool { x: Var, argmax: Vec<usize> },
    FirstPool(Var),
    Concat(Vec<Var>),
    Dropout { x: Var, scale: Vec<f64> },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<Option<usize>>, probs: Vec<f64>, count: f64 },
    Mse { pred: Var, target: Vec<f64> },
    Sum(Var),
    Scale(Var, f64),
    Reshape(Var),
    Rnn(Box<RnnSaved>),
}

#[derive(Debug)]
struct RnnSaved {
    x: Var,
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    mask: Vec<f64>,
    reverse: bool,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations in execution order; parents always precede children,
/// so reverse index order is a valid topological order for backward.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    train: bool,
}

impl Graph {
    /// `train` controls dropout: inverted scaling when true, identity when false.
    pub fn new(train: bool) -> Self {
        Graph { nodes: Vec::new(), train }
    }

    pub fn is_train(&self) -> bool {
        self.train
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Input, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a stored parameter. Gradient flows back into the store
    /// only when the parameter has `requires_grad` set.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.nodes.push(Node { value: p.value.clone(), op: Op::Param(id), needs_grad: p.requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// `a[..., k] x b[k, n] -> [..., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.shape().len() != 2 || av.shape().is_empty() {
            return Err(shape_err("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let (k, n) = (bv.shape()[0], bv.shape()[1]);
        if av.last_dim() != k {
            return Err(shape_err("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let m = av.numel() / k.max(1);
        let out = matmul_raw(av.data(), bv.data(), m, k, n);
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// Elementwise add where `b`'s shape is a suffix of `a`'s shape; `b` is
    /// broadcast over the leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(shape_err("add", format!("{sa:?} + {sb:?}")));
        }
        let inner = bv.numel().max(1);
        let data: Vec<f64> = av.data().iter().enumerate().map(|(i, x)| x + bv.data()[i % inner]).collect();
        let value = Tensor::new(sa.to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let value = Tensor { shape: xv.shape().to_vec(), data };
        self.push(value, op, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// Rows of `table[V, d]` selected by `indices`, shaped `out_prefix + [d]`.
    pub fn embedding_gather(&mut self, table: Var, indices: &[usize], out_prefix: &[usize]) -> Result<Var, TensorError> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(shape_err("embedding_gather", format!("table shape {:?}", tv.shape())));
        }
        let (vocab, d) = (tv.shape()[0], tv.shape()[1]);
        if out_prefix.iter().product::<usize>() != indices.len() {
            return Err(shape_err("embedding_gather", format!("{} indices for prefix {out_prefix:?}", indices.len())));
        }
        let mut data = Vec::with_capacity(indices.len() * d);
        for &ix in indices {
            if ix >= vocab {
                return Err(shape_err("embedding_gather", format!("index {ix} >= vocabulary {vocab}")));
            }
            data.extend_from_slice(&tv.data()[ix * d..(ix + 1) * d]);
        }
        let mut shape = out_prefix.to_vec();
        shape.push(d);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Gather { table, indices: indices.to_vec() }, &[table]))
    }

    fn pool_dims(&self, x: Var, mask: &[f64], op: &'static str) -> Result<(usize, usize, usize), TensorError> {
        let s = self.shape(x);
        if s.len() != 3 || mask.len() != s[0] * s[1] {
            return Err(shape_err(op, format!("input {s:?} with mask of {} entries", mask.len())));
        }
        Ok((s[0], s[1], s[2]))
    }

    /// Masked mean over the time axis: `[B, T, d] -> [B, d]`.
    pub fn mean_pool(&mut self, x: Var, mask: &[f64]) -> Result<Var, TensorError> {
        let (b, t, d) = self.pool_dims(x, mask, "mean_pool")?;
        let xv = self.value(x).data();
        let mut out = vec![0.0; b * d];
        let mut counts = vec![0.0; b];
        for row in 0..b {
            let count: f64 = mask[row * t..(row + 1) * t].iter().sum();
            if count <= 0.0 {
                return Err(TensorError::FullyMasked { row });
            }
            counts[row] = count;
            for step in 0..t {
                let m = mask[row * t + step];
                if m != 0.0 {
                    let base = (row * t + step) * d;
                    for j in 0..d {
                        out[row * d + j] += m * xv[base + j];
                    }
                }
            }
            for j in 0..d {
                out[row * d + j] /= count;
            }
        }
        let value = Tensor::new(vec![b, d], out)?;
        Ok(self.push(value, Op::MeanPool { x, mask: mask.to_vec(), counts }, &[x]))
    }

    /// Masked max over the time axis: `[B, T, d] -> [B, d]`.
    pub fn max_pool(&mut self, x: Var, mask: &[f64]) -> Result<Var, TensorError> {
        let (b, t, d) = self.pool_dims(x, mask, "max_pool")?;
        let xv = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; b * d];
        let mut argmax = vec![usize::MAX; b * d];
        for row in 0..b {
            for step in 0..t {
                if mask[row * t + step] == 0.0 {
                    continue;
                }
                let base = (row * t + step) * d;
                for j in 0..d {
                    if xv[base + j] > out[row * d + j] || argmax[row * d + j] == usize::MAX {
                        out[row * d + j] = xv[base + j];
                        argmax[row * d + j] = base + j;
                    }
                }
            }
            if argmax[row * d] == usize::MAX && d > 0 {
                return Err(TensorError::FullyMasked { row });
            }
        }
        let value = Tensor::new(vec![b, d], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    /// State at the first position: `[B, T, d] -> [B, d]`.
    pub fn first_pool(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || s[1] == 0 {
            return Err(shape_err("first_pool", format!("input {s:?}")));
        }
        let (b, t, d) = (s[0], s[1], s[2]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(b * d);
        for row in 0..b {
            out.extend_from_slice(&xv[row * t * d..row * t * d + d]);
        }
        let value = Tensor::new(vec![b, d], out)?;
        Ok(self.push(value, Op::FirstPool(x), &[x]))
    }

    /// Concatenation along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = self.shape(*p);
            if s.is_empty() || s[..s.len() - 1] != *lead {
                return Err(shape_err("concat", format!("{s:?} vs leading {lead:?}")));
            }
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat(parts.to_vec()), parts))
    }

    /// Inverted dropout in train mode, identity in eval mode.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(shape_err("dropout", format!("rate {p} outside [0, 1)")));
        }
        if !self.train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - p;
        let xv = self.value(x);
        let scale: Vec<f64> =
            (0..xv.numel()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let data = xv.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let value = Tensor { shape: xv.shape().to_vec(), data };
        Ok(self.push(value, Op::Dropout { x, scale }, &[x]))
    }

    /// Mean softmax cross-entropy over rows of `logits[N, K]`. Rows whose
    /// label is `None` are ignored. Returns the scalar loss and the softmax
    /// probabilities.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[Option<usize>]) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        if lv.shape().len() != 2 || lv.shape()[0] != labels.len() {
            return Err(shape_err("softmax_cross_entropy", format!("logits {:?} with {} labels", lv.shape(), labels.len())));
        }
        let (n, k) = (lv.shape()[0], lv.shape()[1]);
        let probs = softmax_rows(lv.data(), n, k);
        let mut loss = 0.0;
        let mut count = 0.0;
        for (row, label) in labels.iter().enumerate() {
            if let Some(label) = *label {
                if label >= k {
                    return Err(TensorError::LabelOutOfRange { label, classes: k });
                }
                let logits_row = &lv.data()[row * k..(row + 1) * k];
                loss += log_sum_exp(logits_row) - logits_row[label];
                count += 1.0;
            }
        }
        if count == 0.0 {
            return Err(shape_err("softmax_cross_entropy", "no labelled rows"));
        }
        let value = Tensor::scalar(loss / count);
        Ok(self.push(value, Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs, count }, &[logits]))
    }

    /// Mean squared error between `pred` (any shape with `target.len()`
    /// elements) and `target`.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var, TensorError> {
        let pv = self.value(pred);
        if pv.numel() != target.len() || target.is_empty() {
            return Err(shape_err("mse", format!("{} predictions vs {} targets", pv.numel(), target.len())));
        }
        let n = target.len() as f64;
        let loss = pv.data().iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target: target.to_vec() }, &[pred]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let value = Tensor::new(shape.to_vec(), xv.data().to_vec())
            .map_err(|_| shape_err("reshape", format!("{:?} -> {shape:?}", xv.shape())))?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Single-layer tanh recurrence over `x[B, T, d]`:
    /// `h_t = tanh(x_t W_ih + h_{t-1} W_hh + b)` at unmasked positions; masked
    /// positions carry the previous state unchanged. With `reverse`, time runs
    /// from the last position to the first. Output is `[B, T, h]`.
    pub fn rnn(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var, mask: &[f64], reverse: bool) -> Result<Var, TensorError> {
        let xs = self.shape(x).to_vec();
        let (wi, wh, bs) = (self.shape(w_ih).to_vec(), self.shape(w_hh).to_vec(), self.shape(bias).to_vec());
        if xs.len() != 3 || wi.len() != 2 || wi[0] != xs[2] || wh != [wi[1], wi[1]] || bs != [wi[1]] || mask.len() != xs[0] * xs[1] {
            return Err(shape_err("rnn", format!("x {xs:?}, w_ih {wi:?}, w_hh {wh:?}, bias {bs:?}, mask {}", mask.len())));
        }
        let (b, t, d, h) = (xs[0], xs[1], xs[2], wi[1]);
        let xv = self.value(x).data();
        let (wiv, whv, bv) = (self.value(w_ih).data(), self.value(w_hh).data(), self.value(bias).data());
        let mut out = vec![0.0; b * t * h];
        let mut state = vec![0.0; h];
        for row in 0..b {
            state.iter_mut().for_each(|s| *s = 0.0);
            for k in 0..t {
                let step = if reverse { t - 1 - k } else { k };
                let pos = row * t + step;
                if mask[pos] != 0.0 {
                    let xt = &xv[pos * d..(pos + 1) * d];
                    let mut pre = bv.to_vec();
                    for (i, &xi) in xt.iter().enumerate() {
                        if xi != 0.0 {
                            for (j, p) in pre.iter_mut().enumerate() {
                                *p += xi * wiv[i * h + j];
                            }
                        }
                    }
                    for (i, &si) in state.iter().enumerate() {
                        if si != 0.0 {
                            for (j, p) in pre.iter_mut().enumerate() {
                                *p += si * whv[i * h + j];
                            }
                        }
                    }
                    for (s, p) in state.iter_mut().zip(&pre) {
                        *s = p.tanh();
                    }
                }
                out[pos * h..(pos + 1) * h].copy_from_slice(&state);
            }
        }
        let value = Tensor::new(vec![b, t, h], out)?;
        let saved = RnnSaved { x, w_ih, w_hh, bias, mask: mask.to_vec(), reverse };
        Ok(self.push(value, Op::Rnn(Box::new(saved)), &[x, w_ih, w_hh, bias]))
    }

    /// Backpropagates from a scalar `loss`, adding (not assigning) gradients
    /// into every reachable parameter of `store` that has `requires_grad`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads, store)?;
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, update: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        update(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>], store: &mut ParamStore) -> Result<(), TensorError> {
        let out = node.value.data();
        match &node.op {
            Op::Input => {}
            Op::Param(id) => store.accumulate_grad(*id, g)?,
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (k, n) = (bv.shape()[0], bv.shape()[1]);
                let m = av.numel() / k.max(1);
                self.accumulate(grads, *a, |ga| {
                    for r in 0..m {
                        for i in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[r * n + j] * bv.data()[i * n + j];
                            }
                            ga[r * k + i] += acc;
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for r in 0..m {
                        for i in 0..k {
                            let a_ri = av.data()[r * k + i];
                            if a_ri == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[i * n + j] += a_ri * g[r * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let inner = self.value(*b).numel().max(1);
                self.accumulate(grads, *b, |gb| {
                    for (i, y) in g.iter().enumerate() {
                        gb[i % inner] += y;
                    }
                });
            }
            Op::Tanh(x) => self.accumulate(grads, *x, |gx| {
                for i in 0..gx.len() {
                    gx[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }),
            Op::Sigmoid(x) => self.accumulate(grads, *x, |gx| {
                for i in 0..gx.len() {
                    gx[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }),
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |gx| {
                    for i in 0..gx.len() {
                        if xv[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                })
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += c * b)),
            Op::Gather { table, indices } => {
                let d = self.value(*table).shape()[1];
                self.accumulate(grads, *table, |gt| {
                    for (pos, &ix) in indices.iter().enumerate() {
                        for j in 0..d {
                            gt[ix * d + j] += g[pos * d + j];
                        }
                    }
                })
            }
            Op::MeanPool { x, mask, counts } => {
                let s = self.shape(*x);
                let (b, t, d) = (s[0], s[1], s[2]);
                self.accumulate(grads, *x, |gx| {
                    for row in 0..b {
                        for step in 0..t {
                            let m = mask[row * t + step];
                            if m == 0.0 {
                                continue;
                            }
                            let w = m / counts[row];
                            let base = (row * t + step) * d;
                            for j in 0..d {
                                gx[base + j] += w * g[row * d + j];
                            }
                        }
                    }
                })
            }
            Op::MaxPool { x, argmax } => self.accumulate(grads, *x, |gx| {
                for (i, &src) in argmax.iter().enumerate() {
                    gx[src] += g[i];
                }
            }),
            Op::FirstPool(x) => {
                let s = self.shape(*x);
                let (b, t, d) = (s[0], s[1], s[2]);
                self.accumulate(grads, *x, |gx| {
                    for row in 0..b {
                        for j in 0..d {
                            gx[row * t * d + j] += g[row * d + j];
                        }
                    }
                })
            }
            Op::Concat(parts) => {
                let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).last_dim()).collect();
                let total: usize = widths.iter().sum();
                let rows = g.len() / total.max(1);
                let mut offset = 0;
                for (p, &w) in parts.iter().zip(&widths) {
                    self.accumulate(grads, *p, |gp| {
                        for r in 0..rows {
                            for j in 0..w {
                                gp[r * w + j] += g[r * total + offset + j];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::Dropout { x, scale } => {
                self.accumulate(grads, *x, |gx| gx.iter_mut().zip(g.iter().zip(scale)).for_each(|(a, (b, s))| *a += b * s))
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs, count } => {
                let k = self.value(*logits).shape()[1];
                let scale = g[0] / count;
                self.accumulate(grads, *logits, |gl| {
                    for (row, label) in labels.iter().enumerate() {
                        if let Some(label) = *label {
                            for j in 0..k {
                                let indicator = if j == label { 1.0 } else { 0.0 };
                                gl[row * k + j] += scale * (probs[row * k + j] - indicator);
                            }
                        }
                    }
                })
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred).data();
                let scale = 2.0 * g[0] / target.len() as f64;
                self.accumulate(grads, *pred, |gp| {
                    for i in 0..gp.len() {
                        gp[i] += scale * (pv[i] - target[i]);
                    }
                })
            }
            Op::Sum(x) => self.accumulate(grads, *x, |gx| gx.iter_mut().for_each(|a| *a += g[0])),
            Op::Reshape(x) => self.accumulate(grads, *x, |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += b)),
            Op::Rnn(saved) => self.rnn_backward(saved, out, g, grads),
        }
        Ok(())
    }

    fn rnn_backward(&self, saved: &RnnSaved, out: &[f64], g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let xs = self.shape(saved.x);
        let (b, t, d) = (xs[0], xs[1], xs[2]);
        let h = self.shape(saved.w_ih)[1];
        let xv = self.value(saved.x).data();
        let wiv = self.value(saved.w_ih).data();
        let whv = self.value(saved.w_hh).data();
        let mask = &saved.mask;

        let mut gx = vec![0.0; xv.len()];
        let mut gwi = vec![0.0; wiv.len()];
        let mut gwh = vec![0.0; whv.len()];
        let mut gb = vec![0.0; h];
        let mut carry = vec![0.0; h];
        let mut da = vec![0.0; h];
        for row in 0..b {
            carry.iter_mut().for_each(|c| *c = 0.0);
            // walk processing order backwards
            for k in (0..t).rev() {
                let step = if saved.reverse { t - 1 - k } else { k };
                let pos = row * t + step;
                for j in 0..h {
                    carry[j] += g[pos * h + j];
                }
                if mask[pos] == 0.0 {
                    continue;
                }
                let prev = (k > 0).then(|| if saved.reverse { t - k } else { k - 1 });
                let state = &out[pos * h..(pos + 1) * h];
                for j in 0..h {
                    da[j] = carry[j] * (1.0 - state[j] * state[j]);
                }
                let xt = &xv[pos * d..(pos + 1) * d];
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..h {
                        acc += da[j] * wiv[i * h + j];
                        gwi[i * h + j] += xt[i] * da[j];
                    }
                    gx[pos * d + i] += acc;
                }
                if let Some(prev_step) = prev {
                    let prev_pos = row * t + prev_step;
                    let hp = &out[prev_pos * h..(prev_pos + 1) * h];
                    for i in 0..h {
                        for j in 0..h {
                            gwh[i * h + j] += hp[i] * da[j];
                        }
                    }
                }
                for j in 0..h {
                    gb[j] += da[j];
                }
                for i in 0..h {
                    let mut acc = 0.0;
                    for j in 0..h {
                        acc += da[j] * whv[i * h + j];
                    }
                    carry[i] = acc;
                }
            }
        }
        let add = |dst: &mut [f64], src: &[f64]| dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        self.accumulate(grads, saved.x, |dst| add(dst, &gx));
        self.accumulate(grads, saved.w_ih, |dst| add(dst, &gwi));
        self.accumulate(grads, saved.w_hh, |dst| add(dst, &gwh));
        self.accumulate(grads, saved.bias, |dst| add(dst, &gb));
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_rows(data: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for r in 0..n {
        let row = &data[r * k..(r + 1) * k];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..k {
            let e = (row[j] - max).exp();
            out[r * k + j] = e;
            z += e;
        }
        for j in 0..k {
            out[r * k + j] /= z;
        }
    }
    out
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for i in 0..k {
            let a_ri = a[r * k + i];
            if a_ri == 0.0 {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += a_ri * brow[j];
            }
        }
    }
    out
}
