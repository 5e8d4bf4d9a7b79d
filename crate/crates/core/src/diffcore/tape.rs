use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Activation, Mlp, ParamStore};
#[allow(unused_imports)]
use crate::numeric::Float;
use crate::error::{Error, Result};
use crate::linalg::gemm_into;
use crate::numeric::{log_softplus, log_softplus_floor, sigmoid, softplus};
use crate::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Softplus(NodeId),
    LogSoftplus(NodeId),
    LogSoftplusFloor(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    NormalizeRows(NodeId),
    PairConcat(NodeId, NodeId),
    Reshape(NodeId),
    Linearized(NodeId, Matrix),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients aligned with the tensors of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { tensors: store.shapes().into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect() }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Matrix {
        &self.tensors[idx]
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn flat_get(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.len() {
                return t.as_slice()[k];
            }
            k -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.as_slice()).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Reverse-mode tape over dense matrices.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted; backward walks it once in reverse.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_shapes: Vec<(usize, usize)>,
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension { op, expected: sa, found: sb });
        }
        Ok(())
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let value = self.value(a).map(f);
        self.push(op, value)
    }

    /// Records a constant.
    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Records tensor `idx` of `store` as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, idx: usize) -> NodeId {
        if self.param_shapes.is_empty() {
            self.param_shapes = store.shapes();
        }
        self.push(Op::Param(idx), store.get(idx).clone())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = Matrix::matmul_t(self.value(a), false, self.value(b), false)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = Matrix::matmul_t(self.value(a), false, self.value(b), true)?;
        Ok(self.push(Op::MatMulBt(a, b), value))
    }

    /// Adds the `1 x n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.shape(a);
        if self.shape(bias) != (1, ca) {
            return Err(Error::Dimension { op: "add_row", expected: (1, ca), found: self.shape(bias) });
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).as_slice().to_vec();
        for i in 0..ra {
            for (v, bj) in value.row_mut(i).iter_mut().zip(&b) {
                *v += bj;
            }
        }
        Ok(self.push(Op::AddRow(a, bias), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let mut value = self.value(a).clone();
        for (v, w) in value.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *v -= w;
        }
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let mut value = self.value(a).clone();
        for (v, w) in value.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *v *= w;
        }
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::Scale(a, c), |v| c * v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |v| v.max(0.0))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Ln(a), f64::ln)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Softplus(a), softplus)
    }

    /// `ln(softplus(a))`, stable where softplus underflows.
    pub fn log_softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::LogSoftplus(a), log_softplus)
    }

    /// `ln(softplus(a) + floor)`; stays finite and above `ln(floor)`.
    pub fn log_softplus_floor(&mut self, a: NodeId, floor: f64) -> NodeId {
        let ln_floor = floor.ln();
        self.unary(a, Op::LogSoftplusFloor(a), |x| log_softplus_floor(x, ln_floor))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Square(a), |v| v * v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        self.push(Op::Sum(a), Matrix::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let s = m.sum() / m.len() as f64;
        self.push(Op::Mean(a), Matrix::scalar(s))
    }

    /// Divides each row by its Euclidean norm. A zero row is a numeric error.
    pub fn normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Numeric(format!("embedding row {i} has norm {norm}")));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(self.push(Op::NormalizeRows(a), value))
    }

    /// All-pairs concatenation: for `a` (m x p) and `b` (n x q), row `i*n + j`
    /// of the result is `[a_i, b_j]`.
    pub fn pair_concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ma, mb) = (self.value(a), self.value(b));
        let (m, p) = ma.shape();
        let (n, q) = mb.shape();
        let mut value = Matrix::zeros(m * n, p + q);
        for i in 0..m {
            for j in 0..n {
                let row = value.row_mut(i * n + j);
                row[..p].copy_from_slice(ma.row(i));
                row[p..].copy_from_slice(mb.row(j));
            }
        }
        self.push(Op::PairConcat(a, b), value)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let m = self.value(a);
        if m.len() != rows * cols {
            return Err(Error::Dimension { op: "reshape", expected: (rows, cols), found: m.shape() });
        }
        let value = Matrix::from_vec(rows, cols, m.as_slice().to_vec())?;
        Ok(self.push(Op::Reshape(a), value))
    }

    /// A scalar node whose value and gradient with respect to `input` were
    /// computed elsewhere (closed-form loss gradients).
    pub fn linearized(&mut self, input: NodeId, value: f64, grad: Matrix) -> Result<NodeId> {
        if grad.shape() != self.shape(input) {
            return Err(Error::Dimension {
                op: "linearized",
                expected: self.shape(input),
                found: grad.shape(),
            });
        }
        Ok(self.push(Op::Linearized(input, grad), Matrix::scalar(value)))
    }

    /// Applies the MLP stored at `mlp.offset` in `store` to `input`.
    pub fn mlp(&mut self, store: &ParamStore, mlp: &Mlp, input: NodeId) -> Result<NodeId> {
        let (_, cols) = self.shape(input);
        if cols != mlp.input_dim() {
            return Err(Error::Dimension {
                op: "mlp input",
                expected: (self.shape(input).0, mlp.input_dim()),
                found: self.shape(input),
            });
        }
        let mut h = input;
        for l in 0..mlp.num_layers() {
            let w = self.param(store, mlp.offset + 2 * l);
            let b = self.param(store, mlp.offset + 2 * l + 1);
            let z = self.matmul(h, w)?;
            h = self.add_row(z, b)?;
            if l + 1 < mlp.num_layers() {
                h = match mlp.activation {
                    Activation::Relu => self.relu(h),
                };
            }
        }
        Ok(h)
    }

    /// Gradients of scalar node `loss` with respect to every recorded node.
    pub fn backward_nodes(&self, loss: NodeId) -> Result<Vec<Option<Matrix>>> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {} is {:?}",
                loss.0,
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Gradients of scalar node `loss` keyed like the parameter store.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let node_grads = self.backward_nodes(loss)?;
        let mut out = Gradients {
            tensors: self.param_shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        };
        for (node, g) in self.nodes.iter().zip(node_grads) {
            if let (Op::Param(idx), Some(g)) = (&node.op, g) {
                out.tensors[*idx].add_assign(&g);
            }
        }
        Ok(out)
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let val = |id: NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ma, mb) = (val(*a), val(*b));
                let mut da = Matrix::zeros(ma.rows(), ma.cols());
                gemm_into(1.0, g, false, mb, true, 0.0, &mut da);
                let mut db = Matrix::zeros(mb.rows(), mb.cols());
                gemm_into(1.0, ma, true, g, false, 0.0, &mut db);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::MatMulBt(a, b) => {
                let (ma, mb) = (val(*a), val(*b));
                let mut da = Matrix::zeros(ma.rows(), ma.cols());
                gemm_into(1.0, g, false, mb, false, 0.0, &mut da);
                let mut db = Matrix::zeros(mb.rows(), mb.cols());
                gemm_into(1.0, g, true, ma, false, 0.0, &mut db);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::AddRow(a, bias) => {
                let mut db = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                accumulate(grads, *a, g.clone());
                accumulate(grads, *bias, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, zip_map(g, val(*b), |gv, bv| gv * bv));
                accumulate(grads, *b, zip_map(g, val(*a), |gv, av| gv * av));
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|v| c * v)),
            Op::Relu(a) => {
                accumulate(grads, *a, zip_map(g, val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 }))
            }
            Op::Exp(a) => accumulate(grads, *a, zip_map(g, &node.value, |gv, y| gv * y)),
            Op::Ln(a) => accumulate(grads, *a, zip_map(g, val(*a), |gv, x| gv / x)),
            Op::Softplus(a) => accumulate(grads, *a, zip_map(g, val(*a), |gv, x| gv * sigmoid(x))),
            Op::LogSoftplus(a) => accumulate(
                grads,
                *a,
                zip_map(g, val(*a), |gv, x| {
                    if x < -700.0 {
                        gv
                    } else {
                        gv * sigmoid(x) / softplus(x)
                    }
                }),
            ),
            // d/dx ln(softplus(x) + f) = sigmoid(x) / (softplus(x) + f) = exp(-softplus(-x) - y)
            Op::LogSoftplusFloor(a) => {
                let d = zip_map(val(*a), &node.value, |x, y| (-softplus(-x) - y).exp());
                accumulate(grads, *a, zip_map(g, &d, |gv, dv| gv * dv))
            }
            Op::Square(a) => accumulate(grads, *a, zip_map(g, val(*a), |gv, x| 2.0 * gv * x)),
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, Matrix::filled(r, c, g[(0, 0)]));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, Matrix::filled(r, c, g[(0, 0)] / (r * c) as f64));
            }
            Op::NormalizeRows(a) => {
                let x = val(*a);
                let y = &node.value;
                let mut da = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = y.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                    for ((d, gv), yv) in da.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *d = (gv - yv * dot) / norm;
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::PairConcat(a, b) => {
                let (m, p) = val(*a).shape();
                let (n, q) = val(*b).shape();
                let mut da = Matrix::zeros(m, p);
                let mut db = Matrix::zeros(n, q);
                for i in 0..m {
                    for j in 0..n {
                        let row = g.row(i * n + j);
                        for (d, v) in da.row_mut(i).iter_mut().zip(&row[..p]) {
                            *d += v;
                        }
                        for (d, v) in db.row_mut(j).iter_mut().zip(&row[p..]) {
                            *d += v;
                        }
                    }
                }
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                let reshaped = Matrix::from_vec(r, c, g.as_slice().to_vec())
                    .expect("reshape preserves length");
                accumulate(grads, *a, reshaped);
            }
            Op::Linearized(a, grad) => {
                let s = g[(0, 0)];
                accumulate(grads, *a, grad.map(|v| s * v));
            }
        }
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("shapes agree")
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
