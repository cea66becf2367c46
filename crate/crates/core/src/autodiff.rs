//! Dense tensors and a tape for reverse-mode differentiation.
//!
//! Every operation executed through a [`Tape`] is appended to it together
//! with whatever it needs for its backward rule. [`Tape::backward`] then
//! walks the nodes in reverse insertion order, which is a reverse
//! topological order because a node can only reference earlier nodes.
//!
//! Parameters are registered by name. Registering the same name twice
//! returns the same handle, so weights shared across time steps collect
//! the sum of all their uses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(1);

/// Row-major dense array of 64-bit reals.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Shape(format!("expected a scalar, got shape {:?}", self.shape)))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn add_assign(&mut self, other: &[f64]) {
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }
}

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    idx: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn tensor(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Binary { a: usize, b: usize, kind: BinaryKind },
    Scale { a: usize, factor: f64 },
    Activation { a: usize, kind: Activation },
    Concat { a: usize, b: usize, outer: usize, a_chunk: usize, b_chunk: usize },
    Slice { a: usize, start: usize },
    Lookup { table: usize, row: usize },
    SoftmaxCrossEntropy { a: usize, gold: usize, probs: Vec<f64> },
    Sum { a: usize },
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations. Single writer; one tape per example.
pub struct Tape<'a> {
    id: usize,
    nodes: Vec<Node<'a>>,
    params: Vec<(String, usize)>,
    by_name: HashMap<String, usize>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<'a>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.idx)
    }

    fn grad_flag(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Value::Owned(t), Op::Leaf, false)
    }

    /// Registers a named parameter borrowed from its owner. A name already on
    /// the tape returns the existing handle.
    pub fn param(&mut self, name: &str, t: &'a Tensor) -> Var {
        self.register(name, Value::Borrowed(t))
    }

    pub fn param_owned(&mut self, name: &str, t: Tensor) -> Var {
        self.register(name, Value::Owned(t))
    }

    fn register(&mut self, name: &str, value: Value<'a>) -> Var {
        if let Some(&idx) = self.by_name.get(name) {
            return Var { tape: self.id, idx };
        }
        let v = self.push(value, Op::Leaf, true);
        self.params.push((name.to_string(), v.idx));
        self.by_name.insert(name.to_string(), v.idx);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        self.nodes[v.idx].value.tensor()
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        let idx = self.check(v)?;
        self.nodes[idx].value.tensor().item()
    }

    fn t(&self, idx: usize) -> &Tensor {
        self.nodes[idx].value.tensor()
    }

    /// Matrix product. `b` may be a matrix `[k, n]` or a vector `[k]`, in which
    /// case the result is a vector `[m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.t(ia), self.t(ib));
        let dims = matmul_dims(ta.shape(), tb.shape())?;
        let (m, k, n) = dims;
        let mut out = vec![0.0; m * n];
        gemm(ta.data(), tb.data(), &mut out, m, k, n);
        let shape = if tb.shape().len() == 1 { vec![m] } else { vec![m, n] };
        let rg = self.grad_flag(&[ia, ib]);
        Ok(self.push(Value::Owned(Tensor { shape, data: out }), Op::MatMul { a: ia, b: ib }, rg))
    }

    pub fn elementwise(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.t(ia), self.t(ib));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!(
                "elementwise {:?} on shapes {:?} and {:?}",
                kind,
                ta.shape(),
                tb.shape()
            )));
        }
        let data: Vec<f64> = match kind {
            BinaryKind::Add => ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect(),
            BinaryKind::Mul => ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect(),
        };
        let shape = ta.shape().to_vec();
        let rg = self.grad_flag(&[ia, ib]);
        Ok(self.push(Value::Owned(Tensor { shape, data }), Op::Binary { a: ia, b: ib, kind }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryKind::Mul)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let ta = self.t(ia);
        let data = ta.data().iter().map(|x| x * factor).collect();
        let shape = ta.shape().to_vec();
        let rg = self.grad_flag(&[ia]);
        Ok(self.push(Value::Owned(Tensor { shape, data }), Op::Scale { a: ia, factor }, rg))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let ia = self.check(a)?;
        let ta = self.t(ia);
        let data = match kind {
            Activation::Sigmoid => ta.data().iter().map(|&x| sigmoid(x)).collect(),
            Activation::Tanh => ta.data().iter().map(|x| x.tanh()).collect(),
        };
        let shape = ta.shape().to_vec();
        let rg = self.grad_flag(&[ia]);
        // Both derivatives are recovered from the output value.
        Ok(self.push(Value::Owned(Tensor { shape, data }), Op::Activation { a: ia, kind }, rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Tanh)
    }

    /// Joins two tensors along `axis`; all other axes must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (self.t(ia).shape().to_vec(), self.t(ib).shape().to_vec());
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa.iter().zip(&sb).enumerate().all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(Error::Shape(format!(
                "cannot concat shapes {:?} and {:?} on axis {}",
                sa, sb, axis
            )));
        }
        let outer: usize = sa[..axis].iter().product();
        let a_chunk: usize = sa[axis..].iter().product();
        let b_chunk: usize = sb[axis..].iter().product();
        let (da, db) = (self.t(ia).data(), self.t(ib).data());
        let mut data = Vec::with_capacity(da.len() + db.len());
        for o in 0..outer {
            data.extend_from_slice(&da[o * a_chunk..(o + 1) * a_chunk]);
            data.extend_from_slice(&db[o * b_chunk..(o + 1) * b_chunk]);
        }
        let mut shape = sa.clone();
        shape[axis] += sb[axis];
        let rg = self.grad_flag(&[ia, ib]);
        Ok(self.push(
            Value::Owned(Tensor { shape, data }),
            Op::Concat { a: ia, b: ib, outer, a_chunk, b_chunk },
            rg,
        ))
    }

    /// Contiguous sub-vector `[start, start + len)` of a rank-1 tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ia = self.check(a)?;
        let ta = self.t(ia);
        if ta.shape().len() != 1 || start + len > ta.len() {
            return Err(Error::Shape(format!(
                "slice [{}, {}) out of shape {:?}",
                start,
                start + len,
                ta.shape()
            )));
        }
        let data = ta.data()[start..start + len].to_vec();
        let rg = self.grad_flag(&[ia]);
        Ok(self.push(Value::Owned(Tensor::vector(data)), Op::Slice { a: ia, start }, rg))
    }

    /// Row `index` of a `[V, d]` table.
    pub fn embedding_lookup(&mut self, table: Var, index: usize) -> Result<Var> {
        let it = self.check(table)?;
        let tt = self.t(it);
        if tt.shape().len() != 2 {
            return Err(Error::Shape(format!("embedding table must be 2-d, got {:?}", tt.shape())));
        }
        let (rows, d) = (tt.shape()[0], tt.shape()[1]);
        if index >= rows {
            return Err(Error::IndexOutOfRange { index, len: rows });
        }
        let data = tt.data()[index * d..(index + 1) * d].to_vec();
        let rg = self.grad_flag(&[it]);
        Ok(self.push(Value::Owned(Tensor::vector(data)), Op::Lookup { table: it, row: index }, rg))
    }

    /// `-log softmax(logits)[gold]` as a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, gold: usize) -> Result<Var> {
        let ia = self.check(logits)?;
        let ta = self.t(ia);
        if ta.shape().len() != 1 {
            return Err(Error::Shape(format!("logits must be a vector, got {:?}", ta.shape())));
        }
        if gold >= ta.len() {
            return Err(Error::IndexOutOfRange { index: gold, len: ta.len() });
        }
        let (log_z, probs) = log_softmax_parts(ta.data());
        let loss = log_z - ta.data()[gold];
        let rg = self.grad_flag(&[ia]);
        Ok(self.push(
            Value::Owned(Tensor::scalar(loss)),
            Op::SoftmaxCrossEntropy { a: ia, gold, probs },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let s = self.t(ia).data().iter().sum();
        let rg = self.grad_flag(&[ia]);
        Ok(self.push(Value::Owned(Tensor::scalar(s)), Op::Sum { a: ia }, rg))
    }

    /// Arithmetic mean of scalar variables, accumulated left to right.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        let (first, rest) = xs.split_first().ok_or(Error::EmptySequence)?;
        let mut acc = *first;
        for &x in rest {
            acc = self.add(acc, x)?;
        }
        self.scale(acc, 1.0 / xs.len() as f64)
    }

    /// Reverse pass from a scalar loss, seeded with 1.0.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.check(loss)?;
        if self.t(root).len() != 1 {
            return Err(Error::NotScalar(self.t(root).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=root).map(|_| None).collect();
        grads[root] = Some(vec![1.0]);

        for idx in (0..=root).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let out = node.value.tensor();
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul { a, b } => {
                    let (ta, tb) = (self.t(*a), self.t(*b));
                    let (m, k, n) = matmul_dims(ta.shape(), tb.shape())?;
                    if self.nodes[*a].requires_grad {
                        // dA = dC · Bᵀ
                        let da = accum(&mut grads[*a], m * k);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let darow = &mut da[i * k..(i + 1) * k];
                            for (p, d) in darow.iter_mut().enumerate() {
                                let brow = &tb.data()[p * n..(p + 1) * n];
                                *d += dot(grow, brow);
                            }
                        }
                    }
                    if self.nodes[*b].requires_grad {
                        // dB = Aᵀ · dC
                        let db = accum(&mut grads[*b], k * n);
                        for i in 0..m {
                            let arow = &ta.data()[i * k..(i + 1) * k];
                            let grow = &g[i * n..(i + 1) * n];
                            for (p, &av) in arow.iter().enumerate() {
                                if av == 0.0 {
                                    continue;
                                }
                                for (d, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *d += av * gv;
                                }
                            }
                        }
                    }
                }
                Op::Binary { a, b, kind } => {
                    let len = g.len();
                    match kind {
                        BinaryKind::Add => {
                            for side in [*a, *b] {
                                if self.nodes[side].requires_grad {
                                    let d = accum(&mut grads[side], len);
                                    for (d, gv) in d.iter_mut().zip(&g) {
                                        *d += gv;
                                    }
                                }
                            }
                        }
                        BinaryKind::Mul => {
                            for (side, other) in [(*a, *b), (*b, *a)] {
                                if self.nodes[side].requires_grad {
                                    let ov = self.t(other).data();
                                    let d = accum(&mut grads[side], len);
                                    for ((d, gv), o) in d.iter_mut().zip(&g).zip(ov) {
                                        *d += gv * o;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Scale { a, factor } => {
                    let d = accum(&mut grads[*a], g.len());
                    for (d, gv) in d.iter_mut().zip(&g) {
                        *d += gv * factor;
                    }
                }
                Op::Activation { a, kind } => {
                    let d = accum(&mut grads[*a], g.len());
                    for ((d, gv), y) in d.iter_mut().zip(&g).zip(out.data()) {
                        let dy = match kind {
                            Activation::Sigmoid => y * (1.0 - y),
                            Activation::Tanh => 1.0 - y * y,
                        };
                        *d += gv * dy;
                    }
                }
                Op::Concat { a, b, outer, a_chunk, b_chunk } => {
                    let stride = a_chunk + b_chunk;
                    if self.nodes[*a].requires_grad {
                        let d = accum(&mut grads[*a], outer * a_chunk);
                        for o in 0..*outer {
                            for j in 0..*a_chunk {
                                d[o * a_chunk + j] += g[o * stride + j];
                            }
                        }
                    }
                    if self.nodes[*b].requires_grad {
                        let d = accum(&mut grads[*b], outer * b_chunk);
                        for o in 0..*outer {
                            for j in 0..*b_chunk {
                                d[o * b_chunk + j] += g[o * stride + a_chunk + j];
                            }
                        }
                    }
                }
                Op::Slice { a, start } => {
                    let n = self.t(*a).len();
                    let d = accum(&mut grads[*a], n);
                    for (j, gv) in g.iter().enumerate() {
                        d[start + j] += gv;
                    }
                }
                Op::Lookup { table, row } => {
                    let tt = self.t(*table);
                    let dim = tt.shape()[1];
                    let d = accum(&mut grads[*table], tt.len());
                    for (j, gv) in g.iter().enumerate() {
                        d[row * dim + j] += gv;
                    }
                }
                Op::SoftmaxCrossEntropy { a, gold, probs } => {
                    let d = accum(&mut grads[*a], probs.len());
                    for (j, p) in probs.iter().enumerate() {
                        let onehot = if j == *gold { 1.0 } else { 0.0 };
                        d[j] += g[0] * (p - onehot);
                    }
                }
                Op::Sum { a } => {
                    let n = self.t(*a).len();
                    let d = accum(&mut grads[*a], n);
                    for x in d.iter_mut() {
                        *x += g[0];
                    }
                }
            }
        }

        let mut by_name = BTreeMap::new();
        for (name, idx) in &self.params {
            let shape = self.t(*idx).shape().to_vec();
            let data = match grads.get_mut(*idx).and_then(Option::take) {
                Some(d) => d,
                None => vec![0.0; self.t(*idx).len()],
            };
            by_name.insert(name.clone(), Tensor { shape, data });
        }
        Ok(Gradients { by_name })
    }
}

fn accum(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    let mismatch = || Error::Shape(format!("matmul of {:?} and {:?}", a, b));
    if a.len() != 2 {
        return Err(mismatch());
    }
    let (m, k) = (a[0], a[1]);
    let (kb, n) = match b {
        [k] => (*k, 1),
        [k, n] => (*k, *n),
        _ => return Err(mismatch()),
    };
    if k != kb {
        return Err(mismatch());
    }
    Ok((m, k, n))
}

fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&a[i * k..(i + 1) * k], b);
        }
        return;
    }
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
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

/// Returns `(log Σ exp(x), softmax(x))`, stabilized by the maximum.
pub fn log_softmax_parts(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs = exps.iter().map(|e| e / z).collect();
    (max + z.ln(), probs)
}

/// Log-probabilities of a logit vector.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let (log_z, _) = log_softmax_parts(logits);
    logits.iter().map(|x| x - log_z).collect()
}

/// Gradient of a scalar loss with respect to each named parameter on the tape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    by_name: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.by_name.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.by_name.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.by_name.insert(name.to_string(), t);
    }

    /// Sums another gradient map into this one.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.by_name {
            match self.by_name.get_mut(name) {
                Some(mine) => mine.add_assign(g.data()),
                None => {
                    self.by_name.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.by_name.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.by_name.values().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.by_name.values().all(Tensor::is_finite)
    }
}
