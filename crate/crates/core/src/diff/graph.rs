//! Tape of executed operations and the reverse sweep over it.
//!
//! Nodes are appended in execution order, so the tape order is a
//! topological order and the backward pass is a single reverse scan.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use super::conv::{self, ConvDims};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::sparse::{self, Dictionary, PursuitConfig, SparseCode};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
    Scale(f64),
}

/// Reductions. `MaxOverTime` reduces the rows of a `T × d` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    MaxOverTime,
    L2Norm,
}

/// User-defined operation whose forward value is computed by the caller.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;
    /// Gradient for each input given the output gradient.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Tanh,
    Sigmoid,
    Relu,
}

struct SparseNode {
    h: Var,
    atoms: Var,
    excluded: Vec<usize>,
    code: SparseCode,
    freeze_atoms: bool,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Affine(Var, f64),
    Sum(Var),
    Mean(Var),
    MaxOverTime(Var, Vec<usize>),
    L2Norm(Var),
    Conv1d(Var, Var),
    Conv1dInputGrad(Var, Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    MaskedSoftmax(Var, Vec<bool>),
    CrossEntropy(Var, usize),
    Sparse(Box<SparseNode>),
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Binary(..) => "binary",
            Op::Unary(..) => "unary",
            Op::Affine(..) => "affine",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MaxOverTime(..) => "max_over_time",
            Op::L2Norm(..) => "l2_norm",
            Op::Conv1d(..) => "conv1d",
            Op::Conv1dInputGrad(..) => "conv1d_input_grad",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::MaskedSoftmax(..) => "masked_softmax",
            Op::CrossEntropy(..) => "cross_entropy",
            Op::Sparse(..) => "sparse_encode",
            Op::Custom(op, _) => op.name(),
        };
        f.write_str(name)
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Not shareable across threads while being built;
/// independent graphs may be evaluated in parallel.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn conv_dims(filters: &Tensor) -> Result<ConvDims> {
    match filters.shape() {
        [w, d_in, d_out] => Ok(ConvDims {
            width: *w,
            d_in: *d_in,
            d_out: *d_out,
        }),
        s => Err(Error::dim("conv1d filters", s, &[0, 0, 0])),
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient populated by the last [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (va.dims2(), vb.dims2());
        if k != k2 {
            return Err(Error::dim("matmul", va.shape(), vb.shape()));
        }
        let out = Tensor::matrix(m, n, matmul_raw(va.data(), vb.data(), m, k, n))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let (r, c) = va.dims2();
        let out = Tensor::matrix(c, r, transpose_raw(va.data(), r, c))?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn elementwise(&mut self, kind: Elementwise, inputs: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Config(format!("{kind:?} takes {arity} inputs, got {}", inputs.len())));
        }
        match kind {
            Elementwise::Add => self.binary(Binary::Add, inputs[0], inputs[1]),
            Elementwise::Sub => self.binary(Binary::Sub, inputs[0], inputs[1]),
            Elementwise::Mul => self.binary(Binary::Mul, inputs[0], inputs[1]),
            Elementwise::Tanh => Ok(self.unary(Unary::Tanh, inputs[0])),
            Elementwise::Sigmoid => Ok(self.unary(Unary::Sigmoid, inputs[0])),
            Elementwise::Relu => Ok(self.unary(Unary::Relu, inputs[0])),
            Elementwise::Scale(s) => Ok(self.affine(inputs[0], s, 0.0)),
        }
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let out = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(va.shape().to_vec(), data)?
        } else if vb.is_scalar() {
            let y = vb.item();
            va.map(|x| f(x, y))
        } else if va.is_scalar() {
            let x = va.item();
            vb.map(|y| f(x, y))
        } else {
            return Err(Error::dim("elementwise", va.shape(), vb.shape()));
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Binary(kind, a, b), rg))
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let va = self.value(a);
        let out = match kind {
            Unary::Tanh => va.map(f64::tanh),
            Unary::Sigmoid => va.map(sigmoid),
            Unary::Relu => va.map(|x| x.max(0.0)),
        };
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Unary(kind, a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    /// `a * scale + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| x * scale + shift);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Affine(a, scale), rg)
    }

    pub fn reduce(&mut self, kind: Reduction, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.numel() == 0 {
            return Err(Error::EmptyInput("reduce"));
        }
        let rg = self.any_grad(&[x]);
        Ok(match kind {
            Reduction::Sum => {
                let out = Tensor::scalar(vx.sum());
                self.push(out, Op::Sum(x), rg)
            }
            Reduction::Mean => {
                let out = Tensor::scalar(vx.sum() / vx.numel() as f64);
                self.push(out, Op::Mean(x), rg)
            }
            Reduction::L2Norm => {
                let out = Tensor::scalar(vx.norm());
                self.push(out, Op::L2Norm(x), rg)
            }
            Reduction::MaxOverTime => {
                let (t, d) = vx.dims2();
                let data = vx.data();
                let mut arg = vec![0usize; d];
                let mut best = data[..d].to_vec();
                for step in 1..t {
                    for j in 0..d {
                        let v = data[step * d + j];
                        if v > best[j] {
                            best[j] = v;
                            arg[j] = step;
                        }
                    }
                }
                self.push(Tensor::row(best), Op::MaxOverTime(x, arg), rg)
            }
        })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(Reduction::Sum, x)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(Reduction::Mean, x)
    }

    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        self.reduce(Reduction::MaxOverTime, x)
    }

    pub fn l2_norm(&mut self, x: Var) -> Result<Var> {
        self.reduce(Reduction::L2Norm, x)
    }

    /// Valid cross-correlation of a `T × d_in` map with `w × d_in × d_out`
    /// filters.
    pub fn conv1d(&mut self, x: Var, filters: Var) -> Result<Var> {
        let (vx, vf) = (self.value(x), self.value(filters));
        let dims = conv_dims(vf)?;
        let (t, d_in) = vx.dims2();
        if d_in != dims.d_in {
            return Err(Error::dim("conv1d", vx.shape(), vf.shape()));
        }
        if t < dims.width {
            return Err(Error::SequenceTooShort {
                len: t,
                width: dims.width,
            });
        }
        let y = conv::forward(vx.data(), t, vf.data(), dims);
        let out = Tensor::matrix(t + 1 - dims.width, dims.d_out, y)?;
        let rg = self.any_grad(&[x, filters]);
        Ok(self.push(out, Op::Conv1d(x, filters), rg))
    }

    /// Input-gradient of [`Graph::conv1d`] as a differentiable op: maps a
    /// `T' × d_out` output gradient to a `(T' + w − 1) × d_in` input gradient.
    pub fn conv1d_input_grad(&mut self, dy: Var, filters: Var) -> Result<Var> {
        let (vy, vf) = (self.value(dy), self.value(filters));
        let dims = conv_dims(vf)?;
        let (t_out, d_out) = vy.dims2();
        if d_out != dims.d_out {
            return Err(Error::dim("conv1d_input_grad", vy.shape(), vf.shape()));
        }
        let dx = conv::input_grad(vy.data(), t_out, vf.data(), dims);
        let out = Tensor::matrix(t_out + dims.width - 1, dims.d_in, dx)?;
        let rg = self.any_grad(&[dy, filters]);
        Ok(self.push(out, Op::Conv1dInputGrad(dy, filters), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.value(a);
        let (r, c) = va.dims2();
        if start + len > c {
            return Err(Error::dim("slice_cols", va.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&va.data()[i * c + start..i * c + start + len]);
        }
        let out = Tensor::matrix(r, len, data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_cols"));
        }
        let rows = self.value(parts[0]).dims2().0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            if r != rows {
                return Err(Error::dim("concat_cols", &[rows], self.value(p).shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &c) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_rows"));
        }
        let cols = self.value(parts[0]).dims2().1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            if c != cols {
                return Err(Error::dim("concat_rows", &[cols], self.value(p).shape()));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Rows `ids` of a matrix, stacked (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let (n, d) = vt.dims2();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= n {
                return Err(Error::dim("gather_rows", vt.shape(), &[i]));
            }
            data.extend_from_slice(vt.row_slice(i));
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        let rg = self.any_grad(&[table]);
        Ok(self.push(out, Op::GatherRows(table, ids.to_vec()), rg))
    }

    /// Softmax over the entries of a row vector where `mask` is set; other
    /// entries are zero.
    pub fn masked_softmax(&mut self, logits: Var, mask: Vec<bool>) -> Result<Var> {
        let vl = self.value(logits);
        if vl.numel() != mask.len() {
            return Err(Error::dim("masked_softmax", vl.shape(), &[mask.len()]));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyInput("masked_softmax"));
        }
        let max = vl
            .data()
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = vl
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
            .collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        let out = Tensor::new(vl.shape().to_vec(), p)?;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(out, Op::MaskedSoftmax(logits, mask), rg))
    }

    /// `−log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let vl = self.value(logits);
        if target >= vl.numel() {
            return Err(Error::dim("cross_entropy", vl.shape(), &[target]));
        }
        let max = vl.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + vl.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let out = Tensor::scalar(lse - vl.data()[target]);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(out, Op::CrossEntropy(logits, target), rg))
    }

    /// Sparse reconstruction of the row vector `h` over the rows of `atoms`.
    /// The backward pass treats the selected support as constant.
    pub fn sparse_encode(
        &mut self,
        h: Var,
        atoms: Var,
        excluded: &[usize],
        config: &PursuitConfig,
        freeze_atoms: bool,
    ) -> Result<Var> {
        let dict = Dictionary::from_tensor(self.value(atoms), excluded)?;
        let code = sparse::sparse_encode(self.value(h).data(), &dict, config)?;
        let out = Tensor::row(code.reconstruction.clone());
        let rg = self.requires_grad(h) || (!freeze_atoms && self.requires_grad(atoms));
        let node = SparseNode {
            h,
            atoms,
            excluded: excluded.to_vec(),
            code,
            freeze_atoms,
        };
        Ok(self.push(out, Op::Sparse(Box::new(node)), rg))
    }

    /// Sparse code recorded at a node created by [`Graph::sparse_encode`].
    pub fn sparse_code(&self, v: Var) -> Option<&SparseCode> {
        match &self.nodes[v.0].op {
            Op::Sparse(node) => Some(&node.code),
            _ => None,
        }
    }

    /// All sparse codes on the tape, in execution order.
    pub fn sparse_codes(&self) -> Vec<&SparseCode> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Sparse(node) => Some(&node.code),
                _ => None,
            })
            .collect()
    }

    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], value: Tensor) -> Var {
        let rg = self.any_grad(inputs);
        self.push(value, Op::Custom(op, inputs.to_vec()), rg)
    }

    /// Hash of every piecewise-constant decision on the tape: relu sign
    /// patterns, max-over-time arg-maxima, sparse supports and softmax masks.
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn discrete_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Unary(Unary::Relu, x) => {
                    i.hash(&mut h);
                    for &v in self.nodes[x.0].value.data() {
                        (v > 0.0).hash(&mut h);
                    }
                }
                Op::MaxOverTime(_, arg) => {
                    i.hash(&mut h);
                    arg.hash(&mut h);
                }
                Op::Sparse(node) => {
                    i.hash(&mut h);
                    node.code.indices.hash(&mut h);
                }
                Op::MaskedSoftmax(_, mask) => {
                    i.hash(&mut h);
                    mask.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `loss`. Gradients from earlier calls are
    /// discarded; within one call they accumulate over every use of a node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (v, contrib) in self.node_backward(i, &g)? {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn node_backward(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let gd = g.data();
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let ((m, k), (_, n)) = (va.dims2(), vb.dims2());
                let bt = transpose_raw(vb.data(), k, n);
                let at = transpose_raw(va.data(), m, k);
                let ga = Tensor::new(va.shape().to_vec(), matmul_raw(gd, &bt, m, n, k))?;
                let gb = Tensor::new(vb.shape().to_vec(), matmul_raw(&at, gd, k, m, n))?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Transpose(a) => {
                let (r, c) = val(*a).dims2();
                let ga = Tensor::new(val(*a).shape().to_vec(), transpose_raw(gd, c, r))?;
                vec![(*a, ga)]
            }
            Op::Binary(kind, a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (da, db): (Vec<f64>, Vec<f64>) = match kind {
                    Binary::Add => (gd.to_vec(), gd.to_vec()),
                    Binary::Sub => (gd.to_vec(), gd.iter().map(|x| -x).collect()),
                    Binary::Mul => {
                        let bcast = |t: &Tensor, j: usize| if t.is_scalar() { t.item() } else { t.data()[j] };
                        let da = (0..gd.len()).map(|j| gd[j] * bcast(vb, j)).collect();
                        let db = (0..gd.len()).map(|j| gd[j] * bcast(va, j)).collect();
                        (da, db)
                    }
                };
                let fit = |t: &Tensor, d: Vec<f64>| -> Result<Tensor> {
                    if t.numel() == d.len() {
                        Tensor::new(t.shape().to_vec(), d)
                    } else {
                        Ok(Tensor::new(t.shape().to_vec(), vec![d.iter().sum()])?)
                    }
                };
                vec![(*a, fit(va, da)?), (*b, fit(vb, db)?)]
            }
            Op::Unary(kind, a) => {
                let y = node.value.data();
                let x = val(*a).data();
                let d: Vec<f64> = match kind {
                    Unary::Tanh => gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    Unary::Sigmoid => gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                    Unary::Relu => gd.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
                };
                vec![(*a, Tensor::new(val(*a).shape().to_vec(), d)?)]
            }
            Op::Affine(a, s) => vec![(*a, g.map(|x| x * s))],
            Op::Sum(a) => vec![(*a, Tensor::filled(val(*a).shape(), g.item()))],
            Op::Mean(a) => {
                let n = val(*a).numel() as f64;
                vec![(*a, Tensor::filled(val(*a).shape(), g.item() / n))]
            }
            Op::L2Norm(a) => {
                let y = node.value.item();
                let ga = if y > 0.0 {
                    val(*a).map(|x| g.item() * x / y)
                } else {
                    Tensor::zeros(val(*a).shape())
                };
                vec![(*a, ga)]
            }
            Op::MaxOverTime(a, arg) => {
                let (_, d) = val(*a).dims2();
                let mut ga = Tensor::zeros(val(*a).shape());
                for (j, &t) in arg.iter().enumerate() {
                    ga.data_mut()[t * d + j] = gd[j];
                }
                vec![(*a, ga)]
            }
            Op::Conv1d(x, f) => {
                let (vx, vf) = (val(*x), val(*f));
                let dims = conv_dims(vf)?;
                let t_out = node.value.dims2().0;
                let dx = conv::input_grad(gd, t_out, vf.data(), dims);
                let df = conv::filter_grad(vx.data(), gd, t_out, dims);
                vec![
                    (*x, Tensor::new(vx.shape().to_vec(), dx)?),
                    (*f, Tensor::new(vf.shape().to_vec(), df)?),
                ]
            }
            Op::Conv1dInputGrad(dy, f) => {
                let (vy, vf) = (val(*dy), val(*f));
                let dims = conv_dims(vf)?;
                let t_out = vy.dims2().0;
                let t_in = node.value.dims2().0;
                let gdy = conv::forward(gd, t_in, vf.data(), dims);
                let gf = conv::filter_grad(gd, vy.data(), t_out, dims);
                vec![
                    (*dy, Tensor::new(vy.shape().to_vec(), gdy)?),
                    (*f, Tensor::new(vf.shape().to_vec(), gf)?),
                ]
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).dims2();
                let len = node.value.dims2().1;
                let mut ga = Tensor::zeros(val(*a).shape());
                for i in 0..r {
                    ga.data_mut()[i * c + start..i * c + start + len]
                        .copy_from_slice(&gd[i * len..(i + 1) * len]);
                }
                vec![(*a, ga)]
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2();
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).dims2().1;
                    let mut gp = Vec::with_capacity(rows * c);
                    for i in 0..rows {
                        gp.extend_from_slice(&gd[i * total + offset..i * total + offset + c]);
                    }
                    out.push((p, Tensor::new(val(p).shape().to_vec(), gp)?));
                    offset += c;
                }
                out
            }
            Op::ConcatRows(parts) => {
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).numel();
                    out.push((p, Tensor::new(val(p).shape().to_vec(), gd[offset..offset + n].to_vec())?));
                    offset += n;
                }
                out
            }
            Op::GatherRows(table, ids) => {
                let (_, d) = val(*table).dims2();
                let mut gt = Tensor::zeros(val(*table).shape());
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        gt.data_mut()[id * d + j] += gd[r * d + j];
                    }
                }
                vec![(*table, gt)]
            }
            Op::MaskedSoftmax(a, _) => {
                let p = node.value.data();
                let dot: f64 = p.iter().zip(gd).map(|(p, g)| p * g).sum();
                let d = p.iter().zip(gd).map(|(p, g)| p * (g - dot)).collect();
                vec![(*a, Tensor::new(val(*a).shape().to_vec(), d)?)]
            }
            Op::CrossEntropy(a, target) => {
                let l = val(*a).data();
                let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = l.iter().map(|x| (x - max).exp()).sum();
                let mut d: Vec<f64> = l.iter().map(|x| g.item() * (x - max).exp() / z).collect();
                d[*target] -= g.item();
                vec![(*a, Tensor::new(val(*a).shape().to_vec(), d)?)]
            }
            Op::Sparse(sn) => {
                let vh = val(sn.h);
                if sn.code.indices.is_empty() {
                    return Ok(vec![]);
                }
                let dict = Dictionary::from_tensor(val(sn.atoms), &sn.excluded)?;
                let (gh, gm) = sparse::sparse_backward_full(gd, &sn.code, &dict)?;
                let mut out = vec![(sn.h, Tensor::new(vh.shape().to_vec(), gh)?)];
                if !sn.freeze_atoms {
                    let d = dict.d();
                    let mut ga = Tensor::zeros(val(sn.atoms).shape());
                    for (r, &id) in sn.code.indices.iter().enumerate() {
                        for j in 0..d {
                            ga.data_mut()[id * d + j] += gm[r * d + j];
                        }
                    }
                    out.push((sn.atoms, ga));
                }
                out
            }
            Op::Custom(op, inputs) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                op.backward(&ins, &node.value, g)
                    .into_iter()
                    .zip(inputs)
                    .filter_map(|(t, &v)| t.map(|t| (v, t)))
                    .collect()
            }
        })
    }
}
