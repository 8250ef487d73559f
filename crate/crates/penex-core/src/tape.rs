//! Dense rank-≤2 tensor engine with reverse-mode automatic differentiation.
//!
//! Operations are recorded on an append-only tape owned by a [`Tape`]; a
//! [`Tensor`] is a cheap handle (tape reference + node id). Calling
//! [`Tensor::backward`] on a scalar result replays the tape in reverse and
//! accumulates vector-Jacobian products into the gradient buffers of every
//! node created with `requires_grad`.
//!
//! The engine deliberately supports only what multilayer perceptrons and the
//! losses in this crate need: matrices and column/row vectors, matmul, a row
//! bias broadcast, elementwise arithmetic, `exp`/`log`/`relu`/`powf`,
//! reductions, a numerically stable `log_sum_exp`, a per-row column-vector
//! subtraction (from which softmax is derived), and a label gather. Tapes are
//! rebuilt per forward pass rather than reused.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Shape of a rank-≤2 tensor. Scalars are 1×1 and column vectors are n×1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn numel(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Recorded operation. Operands are node ids on the same tape.
#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    MatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddRowBias { x: usize, bias: usize },
    Affine { x: usize, scale: S },
    Exp { x: usize },
    Log { x: usize },
    Relu { x: usize },
    Powf { x: usize, exponent: S },
    Sum { x: usize },
    Mean { x: usize },
    LogSumExp { x: usize },
    SubCol { x: usize, c: usize },
    Gather { x: usize, labels: Vec<usize> },
}

/// One tape entry: forward value, shape, the op that produced it, and the
/// accumulated gradient for nodes that track one.
#[derive(Debug)]
struct Node<S> {
    data: Vec<S>,
    shape: Shape,
    op: Op<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

/// Append-only computation tape. Cloning shares the underlying storage.
#[derive(Clone)]
pub struct Tape<S: Scalar> {
    nodes: Rc<RefCell<Vec<Node<S>>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one tensor on a tape.
#[derive(Clone)]
pub struct Tensor<S: Scalar> {
    tape: Tape<S>,
    id: usize,
    shape: Shape,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Rc::new(RefCell::new(Vec::new())) }
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, data: Vec<S>, shape: Shape, op: Op<S>, requires_grad: bool) -> Tensor<S> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { data, shape, op, requires_grad, grad: None });
        Tensor { tape: self.clone(), id, shape }
    }

    fn leaf(&self, data: Vec<S>, rows: usize, cols: usize, requires_grad: bool) -> Result<Tensor<S>> {
        let shape = Shape::new(rows, cols);
        if rows == 0 || cols == 0 {
            return Err(CoreError::Dimension(format!("empty tensor shape {shape}")));
        }
        if data.len() != shape.numel() {
            return Err(CoreError::Dimension(format!(
                "data length {} does not match shape {shape}",
                data.len()
            )));
        }
        Ok(self.push(data, shape, Op::Leaf, requires_grad))
    }

    /// Leaf that does not participate in differentiation.
    pub fn constant(&self, data: Vec<S>, rows: usize, cols: usize) -> Result<Tensor<S>> {
        self.leaf(data, rows, cols, false)
    }

    /// Leaf that accumulates a gradient during [`Tensor::backward`].
    pub fn param(&self, data: Vec<S>, rows: usize, cols: usize) -> Result<Tensor<S>> {
        self.leaf(data, rows, cols, true)
    }

    /// 1×1 constant.
    pub fn scalar(&self, v: S) -> Tensor<S> {
        self.push(vec![v], Shape::new(1, 1), Op::Leaf, false)
    }

    /// Reset every accumulated gradient on this tape.
    pub fn zero_grads(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// The tape this tensor lives on, for creating further nodes next to it.
    pub fn tape_handle(&self) -> Tape<S> {
        self.tape.clone()
    }

    /// Copy of the forward value in row-major order.
    pub fn data(&self) -> Vec<S> {
        self.tape.nodes.borrow()[self.id].data.clone()
    }

    /// Forward value of a 1×1 tensor.
    pub fn value(&self) -> Result<S> {
        if !self.shape.is_scalar() {
            return Err(CoreError::Contract(format!(
                "value() requires a scalar tensor, got shape {}",
                self.shape
            )));
        }
        Ok(self.tape.nodes.borrow()[self.id].data[0])
    }

    /// Accumulated gradient, if this tensor tracks one and backward has run.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.tape.nodes.borrow()[self.id].grad.clone()
    }

    fn same_tape(&self, other: &Tensor<S>) -> Result<()> {
        if !Rc::ptr_eq(&self.tape.nodes, &other.tape.nodes) {
            return Err(CoreError::Contract("operands live on different tapes".into()));
        }
        Ok(())
    }

    fn requires(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Matrix product `self[m×k] · b[k×n]`.
    pub fn matmul(&self, b: &Tensor<S>) -> Result<Tensor<S>> {
        self.same_tape(b)?;
        let (sa, sb) = (self.shape, b.shape);
        if sa.cols != sb.rows {
            return Err(CoreError::Dimension(format!(
                "matmul inner dimensions disagree: {sa} vs {sb}"
            )));
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let nodes = self.tape.nodes.borrow();
        let (a_data, b_data) = (&nodes[self.id].data, &nodes[b.id].data);
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a_data[i * k + p];
                for j in 0..n {
                    out[i * n + j] = out[i * n + j] + aip * b_data[p * n + j];
                }
            }
        }
        let req = self.requires() || b.requires();
        drop(nodes);
        Ok(self.tape.push(out, Shape::new(m, n), Op::MatMul { a: self.id, b: b.id }, req))
    }

    fn elementwise_binary(
        &self,
        b: &Tensor<S>,
        name: &str,
        f: impl Fn(S, S) -> S,
        op: impl Fn(usize, usize) -> Op<S>,
    ) -> Result<Tensor<S>> {
        self.same_tape(b)?;
        if self.shape != b.shape {
            return Err(CoreError::Dimension(format!(
                "{name} requires equal shapes, got {} and {}",
                self.shape, b.shape
            )));
        }
        let nodes = self.tape.nodes.borrow();
        let out: Vec<S> = nodes[self.id]
            .data
            .iter()
            .zip(nodes[b.id].data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let req = self.requires() || b.requires();
        drop(nodes);
        Ok(self.tape.push(out, self.shape, op(self.id, b.id), req))
    }

    /// Elementwise sum of two equal-shape tensors.
    pub fn add(&self, b: &Tensor<S>) -> Result<Tensor<S>> {
        self.elementwise_binary(b, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    /// Elementwise difference of two equal-shape tensors.
    pub fn sub(&self, b: &Tensor<S>) -> Result<Tensor<S>> {
        self.elementwise_binary(b, "sub", |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    /// Elementwise product of two equal-shape tensors.
    pub fn mul(&self, b: &Tensor<S>) -> Result<Tensor<S>> {
        self.elementwise_binary(b, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    /// Adds a 1×K bias row to every row of an n×K tensor.
    pub fn add_row_bias(&self, bias: &Tensor<S>) -> Result<Tensor<S>> {
        self.same_tape(bias)?;
        if bias.shape.rows != 1 || bias.shape.cols != self.shape.cols {
            return Err(CoreError::Dimension(format!(
                "bias must be 1x{}, got {}",
                self.shape.cols, bias.shape
            )));
        }
        let k = self.shape.cols;
        let nodes = self.tape.nodes.borrow();
        let (x, b) = (&nodes[self.id].data, &nodes[bias.id].data);
        let out: Vec<S> = x.iter().enumerate().map(|(idx, &v)| v + b[idx % k]).collect();
        let req = self.requires() || bias.requires();
        drop(nodes);
        Ok(self.tape.push(out, self.shape, Op::AddRowBias { x: self.id, bias: bias.id }, req))
    }

    /// Elementwise `scale·x + shift` with compile-time constants.
    pub fn affine(&self, scale: S, shift: S) -> Tensor<S> {
        let out: Vec<S> =
            self.tape.nodes.borrow()[self.id].data.iter().map(|&v| scale * v + shift).collect();
        let req = self.requires();
        self.tape.push(out, self.shape, Op::Affine { x: self.id, scale }, req)
    }

    /// Elementwise multiplication by a constant.
    pub fn scale(&self, factor: S) -> Tensor<S> {
        self.affine(factor, S::zero())
    }

    fn elementwise_unary(&self, f: impl Fn(S) -> S, op: Op<S>) -> Tensor<S> {
        let out: Vec<S> = self.tape.nodes.borrow()[self.id].data.iter().map(|&v| f(v)).collect();
        let req = self.requires();
        self.tape.push(out, self.shape, op, req)
    }

    /// Elementwise exponential.
    pub fn exp(&self) -> Tensor<S> {
        self.elementwise_unary(|v| v.exp(), Op::Exp { x: self.id })
    }

    /// Elementwise natural logarithm.
    pub fn log(&self) -> Tensor<S> {
        self.elementwise_unary(|v| v.ln(), Op::Log { x: self.id })
    }

    /// Elementwise rectifier max(v, 0).
    pub fn relu(&self) -> Tensor<S> {
        self.elementwise_unary(|v| if v > S::zero() { v } else { S::zero() }, Op::Relu { x: self.id })
    }

    /// Elementwise power with a constant exponent.
    pub fn powf(&self, exponent: S) -> Tensor<S> {
        self.elementwise_unary(|v| v.powf(exponent), Op::Powf { x: self.id, exponent })
    }

    /// Sum of all entries, as a 1×1 tensor.
    pub fn sum(&self) -> Tensor<S> {
        let total = self.tape.nodes.borrow()[self.id]
            .data
            .iter()
            .fold(S::zero(), |acc, &v| acc + v);
        let req = self.requires();
        self.tape.push(vec![total], Shape::new(1, 1), Op::Sum { x: self.id }, req)
    }

    /// Mean of all entries, as a 1×1 tensor.
    pub fn mean(&self) -> Tensor<S> {
        let nodes = self.tape.nodes.borrow();
        let data = &nodes[self.id].data;
        let total = data.iter().fold(S::zero(), |acc, &v| acc + v);
        let mean = total / S::from_f64_lossy(data.len() as f64);
        let req = self.requires();
        drop(nodes);
        self.tape.push(vec![mean], Shape::new(1, 1), Op::Mean { x: self.id }, req)
    }

    /// Per-row `log Σⱼ exp(xⱼ)` of an n×K tensor, computed with
    /// max-subtraction so entries up to ±700 do not overflow. Returns n×1.
    pub fn log_sum_exp(&self) -> Result<Tensor<S>> {
        let (n, k) = (self.shape.rows, self.shape.cols);
        if k == 0 {
            return Err(CoreError::Dimension("log_sum_exp over an empty axis".into()));
        }
        let nodes = self.tape.nodes.borrow();
        let x = &nodes[self.id].data;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * k..(i + 1) * k];
            let m = row.iter().fold(S::neg_infinity(), |acc, &v| acc.max(v));
            let s = row.iter().fold(S::zero(), |acc, &v| acc + (v - m).exp());
            out.push(m + s.ln());
        }
        let req = self.requires();
        drop(nodes);
        Ok(self.tape.push(out, Shape::new(n, 1), Op::LogSumExp { x: self.id }, req))
    }

    /// Subtracts a per-row scalar: `out[i,j] = x[i,j] − c[i]` with c of shape n×1.
    pub fn sub_col(&self, c: &Tensor<S>) -> Result<Tensor<S>> {
        self.same_tape(c)?;
        if c.shape.cols != 1 || c.shape.rows != self.shape.rows {
            return Err(CoreError::Dimension(format!(
                "column operand must be {}x1, got {}",
                self.shape.rows, c.shape
            )));
        }
        let k = self.shape.cols;
        let nodes = self.tape.nodes.borrow();
        let (x, cv) = (&nodes[self.id].data, &nodes[c.id].data);
        let out: Vec<S> = x.iter().enumerate().map(|(idx, &v)| v - cv[idx / k]).collect();
        let req = self.requires() || c.requires();
        drop(nodes);
        Ok(self.tape.push(out, self.shape, Op::SubCol { x: self.id, c: c.id }, req))
    }

    /// Row-wise softmax, derived as `exp(x − log_sum_exp(x))`.
    pub fn softmax(&self) -> Result<Tensor<S>> {
        let lse = self.log_sum_exp()?;
        Ok(self.sub_col(&lse)?.exp())
    }

    /// Picks the labeled entry of each row: `out[i] = x[i, labels[i]]`.
    /// Gradients scatter back to the gathered cells only. Returns n×1.
    pub fn gather_labels(&self, labels: &[usize]) -> Result<Tensor<S>> {
        let (n, k) = (self.shape.rows, self.shape.cols);
        if labels.len() != n {
            return Err(CoreError::Dimension(format!(
                "expected {n} labels, got {}",
                labels.len()
            )));
        }
        if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(CoreError::Index(format!(
                "label {bad} at position {i} is out of range for {k} classes"
            )));
        }
        let nodes = self.tape.nodes.borrow();
        let x = &nodes[self.id].data;
        let out: Vec<S> = labels.iter().enumerate().map(|(i, &l)| x[i * k + l]).collect();
        let req = self.requires();
        drop(nodes);
        Ok(self.tape.push(
            out,
            Shape::new(n, 1),
            Op::Gather { x: self.id, labels: labels.to_vec() },
            req,
        ))
    }

    /// Reverse pass from a scalar root. Accumulates ∂root/∂node into the
    /// gradient buffer of every `requires_grad` node reachable from the root;
    /// repeated calls without [`Tape::zero_grads`] keep accumulating.
    pub fn backward(&self) -> Result<()> {
        if !self.shape.is_scalar() {
            return Err(CoreError::Contract(format!(
                "backward requires a scalar root, got shape {}",
                self.shape
            )));
        }
        let mut nodes = self.tape.nodes.borrow_mut();
        let mut pass: Vec<Option<Vec<S>>> = vec![None; self.id + 1];
        pass[self.id] = Some(vec![S::one()]);

        for id in (0..=self.id).rev() {
            let g = match pass[id].take() {
                Some(g) => g,
                None => continue,
            };
            if !nodes[id].requires_grad {
                continue;
            }

            // Helper to accumulate into the pass buffer of an operand.
            macro_rules! send {
                ($target:expr, $len:expr, $write:expr) => {{
                    let target: usize = $target;
                    if nodes[target].requires_grad {
                        let buf = pass[target].get_or_insert_with(|| vec![S::zero(); $len]);
                        #[allow(clippy::redundant_closure_call)]
                        ($write)(buf);
                    }
                }};
            }

            let op = nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let sa = nodes[a].shape;
                    let sb = nodes[b].shape;
                    let (m, k, n) = (sa.rows, sa.cols, sb.cols);
                    let a_data = nodes[a].data.clone();
                    let b_data = nodes[b].data.clone();
                    send!(a, m * k, |buf: &mut Vec<S>| {
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = S::zero();
                                for j in 0..n {
                                    acc = acc + g[i * n + j] * b_data[p * n + j];
                                }
                                buf[i * k + p] = buf[i * k + p] + acc;
                            }
                        }
                    });
                    send!(b, k * n, |buf: &mut Vec<S>| {
                        for p in 0..k {
                            for j in 0..n {
                                let mut acc = S::zero();
                                for i in 0..m {
                                    acc = acc + a_data[i * k + p] * g[i * n + j];
                                }
                                buf[p * n + j] = buf[p * n + j] + acc;
                            }
                        }
                    });
                }
                Op::Add { a, b } => {
                    let len = g.len();
                    send!(a, len, |buf: &mut Vec<S>| {
                        for (bv, &gv) in buf.iter_mut().zip(&g) {
                            *bv = *bv + gv;
                        }
                    });
                    send!(b, len, |buf: &mut Vec<S>| {
                        for (bv, &gv) in buf.iter_mut().zip(&g) {
                            *bv = *bv + gv;
                        }
                    });
                }
                Op::Sub { a, b } => {
                    let len = g.len();
                    send!(a, len, |buf: &mut Vec<S>| {
                        for (bv, &gv) in buf.iter_mut().zip(&g) {
                            *bv = *bv + gv;
                        }
                    });
                    send!(b, len, |buf: &mut Vec<S>| {
                        for (bv, &gv) in buf.iter_mut().zip(&g) {
                            *bv = *bv - gv;
                        }
                    });
                }
                Op::Mul { a, b } => {
                    let len = g.len();
                    let a_data = nodes[a].data.clone();
                    let b_data = nodes[b].data.clone();
                    send!(a, len, |buf: &mut Vec<S>| {
                        for i in 0..len {
                            buf[i] = buf[i] + g[i] * b_data[i];
                        }
                    });
                    send!(b, len, |buf: &mut Vec<S>| {
                        for i in 0..len {
                            buf[i] = buf[i] + g[i] * a_data[i];
                        }
                    });
                }
                Op::AddRowBias { x, bias } => {
                    let len = g.len();
                    let k = nodes[bias].shape.cols;
                    send!(x, len, |buf: &mut Vec<S>| {
                        for (bv, &gv) in buf.iter_mut().zip(&g) {
                            *bv = *bv + gv;
                        }
                    });
                    send!(bias, k, |buf: &mut Vec<S>| {
                        for (idx, &gv) in g.iter().enumerate() {
                            buf[idx % k] = buf[idx % k] + gv;
                        }
                    });
                }
                Op::Affine { x, scale } => {
                    let len = g.len();
                    send!(x, len, |buf: &mut Vec<S>| {
                        for i in 0..len {
                            buf[i] = buf[i] + scale * g[i];
                        }
                    });
                }
                Op::Exp { x } => {
                    let len = g.len();
                    let out = nodes[id].data.clone();
                    send!(x, len, |buf: &mut Vec<S>| {
                        for i in 0..len {
                            buf[i] = buf[i] + g[i] * out[i];
                        }
                    });
                }
                Op::Log { x } => {
                    let len = g.len();
                    let x_data = nodes[x].data.clone();
                    send!(x, len, |buf: &mut Vec<S>| {
                        for i in 0..len {
                            buf[i] = buf[i] + g[i] / x_data[i];
                        }
                    });
                }
                Op::Relu { x } => {
                    let len = g.len();
                    let x_data = nodes[x].data.clone();
                    send!(x, len, |buf: &mut Vec<S>| {
                        for i in 0..len {
                            if x_data[i] > S::zero() {
                                buf[i] = buf[i] + g[i];
                            }
                        }
                    });
                }
                Op::Powf { x, exponent } => {
                    let len = g.len();
                    let x_data = nodes[x].data.clone();
                    send!(x, len, |buf: &mut Vec<S>| {
                        for i in 0..len {
                            let d = exponent * x_data[i].powf(exponent - S::one());
                            buf[i] = buf[i] + g[i] * d;
                        }
                    });
                }
                Op::Sum { x } => {
                    let len = nodes[x].data.len();
                    let gv = g[0];
                    send!(x, len, |buf: &mut Vec<S>| {
                        for bv in buf.iter_mut() {
                            *bv = *bv + gv;
                        }
                    });
                }
                Op::Mean { x } => {
                    let len = nodes[x].data.len();
                    let gv = g[0] / S::from_f64_lossy(len as f64);
                    send!(x, len, |buf: &mut Vec<S>| {
                        for bv in buf.iter_mut() {
                            *bv = *bv + gv;
                        }
                    });
                }
                Op::LogSumExp { x } => {
                    let sx = nodes[x].shape;
                    let (n, k) = (sx.rows, sx.cols);
                    let x_data = nodes[x].data.clone();
                    let out = nodes[id].data.clone();
                    send!(x, n * k, |buf: &mut Vec<S>| {
                        for i in 0..n {
                            for j in 0..k {
                                let p = (x_data[i * k + j] - out[i]).exp();
                                buf[i * k + j] = buf[i * k + j] + g[i] * p;
                            }
                        }
                    });
                }
                Op::SubCol { x, c } => {
                    let len = g.len();
                    let k = nodes[x].shape.cols;
                    let n = nodes[x].shape.rows;
                    send!(x, len, |buf: &mut Vec<S>| {
                        for (bv, &gv) in buf.iter_mut().zip(&g) {
                            *bv = *bv + gv;
                        }
                    });
                    send!(c, n, |buf: &mut Vec<S>| {
                        for (idx, &gv) in g.iter().enumerate() {
                            buf[idx / k] = buf[idx / k] - gv;
                        }
                    });
                }
                Op::Gather { x, labels } => {
                    let sx = nodes[x].shape;
                    let k = sx.cols;
                    send!(x, sx.numel(), |buf: &mut Vec<S>| {
                        for (i, &l) in labels.iter().enumerate() {
                            buf[i * k + l] = buf[i * k + l] + g[i];
                        }
                    });
                }
            }

            // Fold this node's pass gradient into its persistent buffer; only
            // requires_grad nodes reach this point.
            let node = &mut nodes[id];
            let grad = node.grad.get_or_insert_with(|| vec![S::zero(); node.data.len()]);
            for (gv, &pv) in grad.iter_mut().zip(&g) {
                *gv = *gv + pv;
            }
        }
        Ok(())
    }
}
