//! Dense `f64` tensors and a reverse-mode differentiation tape.
//!
//! A [`Tensor`] is a plain value. Computation that needs gradients is
//! recorded on a [`Tape`]: leaves are registered with [`Tape::leaf`], every
//! operation appends a node, and [`Tape::backward`] replays the nodes in
//! reverse. Nodes are appended only after their inputs exist, so insertion
//! order is already a topological order.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Dense row-major tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    /// Builds a tensor, checking the element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::param("shape", format!("{shape:?} has a zero dimension")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Construction {
                shape,
                expected,
                got: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor construction (value {v})")));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Tensor::new(vec![], vec![v])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    // Internal constructor for results already known to be consistent.
    fn raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut flat = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of bounds on axis {i}");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.data.len(),
            1,
            "item() on a tensor with {} elements",
            self.data.len()
        );
        self.data[0]
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "set_grad",
                lhs: self.shape.clone(),
                rhs: vec![grad.len()],
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Plain (untracked) matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k, n) = matmul_dims(self, rhs)?;
        Ok(Tensor::raw(vec![m, n], matmul_kernel(&self.data, &rhs.data, m, k, n)))
    }
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok((a.shape[0], a.shape[1], b.shape[1]))
}

/// `a[m×k] · b[k×n]`, i-k-j loop order.
pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `g[m×n] · bᵀ` where `b` is `k×n`; result is `m×k`.
fn matmul_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · g` where `a` is `m×k` and `g` is `m×n`; result is `k×n`.
fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Relu,
    Exp,
    Log,
    Neg,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

/// Handle to a node on a particular [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Backward rule for [`Tape::custom`]: receives the upstream gradient, the
/// input values and the output value, and returns one gradient per input.
pub type CustomBackward = Box<dyn Fn(&[f64], &[&Tensor], &Tensor) -> Vec<Vec<f64>>>;

enum Op {
    Leaf,
    MatMul(usize, usize),
    Binary {
        op: BinaryOp,
        a: usize,
        b: usize,
        broadcast: bool,
    },
    Unary(UnaryOp, usize),
    Reduce {
        op: ReduceOp,
        input: usize,
        outer: usize,
        len: usize,
        inner: usize,
        argmax: Vec<usize>,
    },
    SumAll(usize),
    MeanAll(usize),
    Scale(usize, f64),
    Reshape(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Custom {
        inputs: Vec<usize>,
        backward: CustomBackward,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Ordered record of operations for reverse-mode differentiation.
///
/// A tape is single-threaded. Separate training runs use separate tapes.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Backward("variable is not attached to this tape".into()));
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var> {
        if value.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    /// Registers a tensor as a differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let mut t = t;
        t.grad = None;
        self.nodes.push(Node { value: t, op: Op::Leaf });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let i = self.index(v).expect("foreign variable");
        &self.nodes[i].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        self.push(out, Op::MatMul(ia, ib), "matmul")
    }

    /// Elementwise binary op. `b` may also be a vector along the last axis
    /// of `a` (bias addition) or a single value.
    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let broadcast = if av.shape == bv.shape {
            false
        } else if bv.len() == 1
            || (av.rank() >= 1
                && bv.len() == *av.shape.last().unwrap()
                && bv.shape.iter().filter(|&&d| d != 1).count() <= 1)
        {
            true
        } else {
            return Err(Error::ShapeMismatch {
                op: "ewise",
                lhs: av.shape.clone(),
                rhs: bv.shape.clone(),
            });
        };
        let blen = bv.len();
        let f = |x: f64, y: f64| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
        };
        let data: Vec<f64> = av
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv.data[i % blen]))
            .collect();
        let out = Tensor::raw(av.shape.clone(), data);
        self.push(
            out,
            Op::Binary {
                op,
                a: ia,
                b: ib,
                broadcast,
            },
            "ewise",
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let av = &self.nodes[ia].value;
        if matches!(op, UnaryOp::Log | UnaryOp::Sqrt) {
            if let Some(&bad) = av.data.iter().find(|&&x| x <= 0.0) {
                let name = if op == UnaryOp::Log { "log" } else { "sqrt" };
                return Err(Error::Domain { op: name, value: bad });
            }
        }
        let f: fn(f64) -> f64 = match op {
            UnaryOp::Relu => |x| if x > 0.0 { x } else { 0.0 },
            UnaryOp::Exp => f64::exp,
            UnaryOp::Log => f64::ln,
            UnaryOp::Neg => |x| -x,
            UnaryOp::Sqrt => f64::sqrt,
        };
        let out = Tensor::raw(av.shape.clone(), av.data.iter().map(|&x| f(x)).collect());
        self.push(out, Op::Unary(op, ia), "unary")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Relu, a)
    }

    /// Reduces along `axis`, removing it from the shape.
    pub fn reduce(&mut self, op: ReduceOp, a: Var, axis: usize) -> Result<Var> {
        let ia = self.index(a)?;
        let av = &self.nodes[ia].value;
        if axis >= av.rank() {
            return Err(Error::InvalidAxis { axis, rank: av.rank() });
        }
        let outer: usize = av.shape[..axis].iter().product();
        let len = av.shape[axis];
        let inner: usize = av.shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        if op == ReduceOp::Max {
            argmax = vec![0; outer * inner];
        }
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| av.data[(o * len + k) * inner + i];
                let slot = o * inner + i;
                data[slot] = match op {
                    ReduceOp::Sum => (0..len).map(at).sum(),
                    ReduceOp::Mean => (0..len).map(at).sum::<f64>() / len as f64,
                    ReduceOp::Max => {
                        let mut best = 0;
                        for k in 1..len {
                            if at(k) > at(best) {
                                best = k;
                            }
                        }
                        argmax[slot] = best;
                        at(best)
                    }
                };
            }
        }
        let mut shape = av.shape.clone();
        shape.remove(axis);
        let out = Tensor::raw(shape, data);
        self.push(
            out,
            Op::Reduce {
                op,
                input: ia,
                outer,
                len,
                inner,
                argmax,
            },
            "reduce",
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let s = self.nodes[ia].value.data.iter().sum();
        self.push(Tensor::raw(vec![], vec![s]), Op::SumAll(ia), "sum")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let v = &self.nodes[ia].value.data;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::raw(vec![], vec![m]), Op::MeanAll(ia), "mean")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.index(a)?;
        let av = &self.nodes[ia].value;
        let out = Tensor::raw(av.shape.clone(), av.data.iter().map(|x| x * c).collect());
        self.push(out, Op::Scale(ia, c), "scale")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ia = self.index(a)?;
        let out = self.nodes[ia].value.reshape(shape)?;
        self.push(out, Op::Reshape(ia), "reshape")
    }

    /// Softmax along the last axis with max subtraction.
    pub fn softmax_last(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let av = &self.nodes[ia].value;
        let width = last_dim(av)?;
        let mut data = av.data.clone();
        for row in data.chunks_mut(width) {
            softmax_in_place(row);
        }
        let out = Tensor::raw(av.shape.clone(), data);
        self.push(out, Op::Softmax(ia), "softmax")
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax_last(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let av = &self.nodes[ia].value;
        let width = last_dim(av)?;
        let mut data = av.data.clone();
        for row in data.chunks_mut(width) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let out = Tensor::raw(av.shape.clone(), data);
        self.push(out, Op::LogSoftmax(ia), "log_softmax")
    }

    /// Records an operation with a caller-supplied backward rule.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: CustomBackward) -> Result<Var> {
        let idx = inputs.iter().map(|&v| self.index(v)).collect::<Result<Vec<_>>>()?;
        self.push(value, Op::Custom { inputs: idx, backward }, "custom")
    }

    /// Clears the backward flag so the tape can be differentiated again.
    pub fn reset_grads(&mut self) {
        self.backward_done = false;
    }

    /// Reverse pass from a scalar loss.
    ///
    /// Calling this twice without [`Tape::reset_grads`] in between is an
    /// error; gradients are never silently accumulated across passes.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let il = self.index(loss)?;
        if self.nodes[il].value.len() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                self.nodes[il].value.shape
            )));
        }
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this tape; call reset_grads first".into(),
            ));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[il] = Some(vec![1.0]);
        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (av.shape[0], av.shape[1], bv.shape[1]);
                accumulate(grads, *a, matmul_bt(g, &bv.data, m, k, n));
                accumulate(grads, *b, matmul_at(&av.data, g, m, k, n));
            }
            Op::Binary { op, a, b, broadcast } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let blen = bv.len();
                let ga: Vec<f64> = match op {
                    BinaryOp::Add | BinaryOp::Sub => g.to_vec(),
                    BinaryOp::Mul => g.iter().enumerate().map(|(j, gv)| gv * bv.data[j % blen]).collect(),
                };
                let mut gb = vec![0.0; blen];
                for (j, gv) in g.iter().enumerate() {
                    let d = match op {
                        BinaryOp::Add => *gv,
                        BinaryOp::Sub => -gv,
                        BinaryOp::Mul => gv * av.data[j],
                    };
                    gb[if *broadcast { j % blen } else { j }] += d;
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Unary(op, a) => {
                let av = &self.nodes[*a].value;
                let ga = g
                    .iter()
                    .zip(&av.data)
                    .zip(&out.data)
                    .map(|((gv, &x), &y)| match op {
                        UnaryOp::Relu => {
                            if x > 0.0 {
                                *gv
                            } else {
                                0.0
                            }
                        }
                        UnaryOp::Exp => gv * y,
                        UnaryOp::Log => gv / x,
                        UnaryOp::Neg => -gv,
                        UnaryOp::Sqrt => gv / (2.0 * y),
                    })
                    .collect();
                accumulate(grads, *a, ga);
            }
            Op::Reduce {
                op,
                input,
                outer,
                len,
                inner,
                argmax,
            } => {
                let mut ga = vec![0.0; outer * len * inner];
                for o in 0..*outer {
                    for ii in 0..*inner {
                        let slot = o * inner + ii;
                        let gv = g[slot];
                        match op {
                            ReduceOp::Sum | ReduceOp::Mean => {
                                let d = if *op == ReduceOp::Mean { gv / *len as f64 } else { gv };
                                for k in 0..*len {
                                    ga[(o * len + k) * inner + ii] += d;
                                }
                            }
                            ReduceOp::Max => ga[(o * len + argmax[slot]) * inner + ii] += gv,
                        }
                    }
                }
                accumulate(grads, *input, ga);
            }
            Op::SumAll(a) => {
                let n = self.nodes[*a].value.len();
                accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::MeanAll(a) => {
                let n = self.nodes[*a].value.len();
                accumulate(grads, *a, vec![g[0] / n as f64; n]);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.iter().map(|x| x * c).collect()),
            Op::Reshape(a) => accumulate(grads, *a, g.to_vec()),
            Op::Softmax(a) => {
                let width = *out.shape.last().unwrap();
                let mut ga = vec![0.0; g.len()];
                for ((grow, srow), arow) in g.chunks(width).zip(out.data.chunks(width)).zip(ga.chunks_mut(width)) {
                    let dot: f64 = grow.iter().zip(srow).map(|(x, y)| x * y).sum();
                    for ((o, gv), s) in arow.iter_mut().zip(grow).zip(srow) {
                        *o = s * (gv - dot);
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::LogSoftmax(a) => {
                let width = *out.shape.last().unwrap();
                let mut ga = vec![0.0; g.len()];
                for ((grow, lrow), arow) in g.chunks(width).zip(out.data.chunks(width)).zip(ga.chunks_mut(width)) {
                    let gsum: f64 = grow.iter().sum();
                    for ((o, gv), l) in arow.iter_mut().zip(grow).zip(lrow) {
                        *o = gv - l.exp() * gsum;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::Custom { inputs, backward } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&k| &self.nodes[k].value).collect();
                for (k, gk) in inputs.iter().zip(backward(g, &ins, out)) {
                    accumulate(grads, *k, gk);
                }
            }
        }
    }
}

fn last_dim(t: &Tensor) -> Result<usize> {
    t.shape.last().copied().ok_or(Error::InvalidAxis { axis: 0, rank: 0 })
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], i: usize, g: Vec<f64>) {
    match &mut grads[i] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// Result of a backward pass.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        assert_eq!(v.tape, self.tape, "variable from a different tape");
        let shape = self.shapes[v.index].clone();
        match &self.grads[v.index] {
            Some(g) => Tensor::raw(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }
}

/// Maximum relative error between the tape gradient of `f` at `x` and a
/// central finite difference with step `eps`.
///
/// Per coordinate the error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::param("eps", "must be > 0"));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = f(&mut tape, xv)?;
    let analytic = tape.backward(loss)?.wrt(xv);

    let eval = |t: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(t);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data[i] += eps;
        let mut minus = x.clone();
        minus.data[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
