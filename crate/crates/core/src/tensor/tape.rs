//! Define-by-run tape. Nodes are appended in evaluation order, so the node
//! vector is already a topological order and backward is a reverse sweep.

use std::collections::BTreeMap;

use super::params::{ParamId, ParamStore};
use super::{dot, matmul, matmul_nt, matmul_tn_acc, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    MatMulNT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Gelu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    ClampExp { x: usize, lo: f64, hi: f64 },
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax(usize),
    LogSoftmax(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows { x: usize, start: usize },
    SliceCols { x: usize, start: usize },
    MeanRows(usize),
    MaxRows { x: usize, argmax: Vec<usize> },
    GroupMax { x: usize, argmax: Vec<usize> },
    GroupMean { x: usize, group: usize },
    SumAll(usize),
    Pick { x: usize, index: usize },
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// One graph instance: parameters are borrowed, intermediate values owned.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<usize>>,
    fully_masked_rows: usize,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(512),
            param_nodes: vec![None; params.len()],
            fully_masked_rows: 0,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of softmax rows so far whose keys were all masked.
    pub fn fully_masked_rows(&self) -> usize {
        self.fully_masked_rows
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.val(v.0)
    }

    fn val(&self, i: usize) -> &Tensor {
        match self.nodes[i].op {
            Op::Param(p) => self.params.get(p),
            _ => &self.nodes[i].value,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// First node holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.nodes.len()).find(|&i| !self.val(i).all_finite())
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(i) = self.param_nodes[id.0] {
            return Var(i);
        }
        let v = self.push(Op::Param(id), Tensor::zeros(&[0]), true);
        self.param_nodes[id.0] = Some(v.0);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        assert_eq!(k, tb.rows(), "matmul {:?} x {:?}", ta.shape(), tb.shape());
        let out = Tensor::matrix(m, n, matmul(ta.data(), tb.data(), m, k, n));
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::MatMul(a.0, b.0), out, rg)
    }

    /// `a * b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        assert_eq!(k, tb.cols(), "matmul_nt {:?} x {:?}^T", ta.shape(), tb.shape());
        let out = Tensor::matrix(m, n, matmul_nt(ta.data(), tb.data(), m, k, n));
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::MatMulNT(a.0, b.0), out, rg)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor {
            shape: ta.shape().to_vec(),
            data,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::Add(a.0, b.0), out, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::Sub(a.0, b.0), out, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::Mul(a.0, b.0), out, rg)
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x / y);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::Div(a.0, b.0), out, rg)
    }

    /// Adds a `[1, n]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.val(a.0), self.val(row.0));
        let n = ta.cols();
        assert_eq!(tr.len(), n, "add_row: {:?} + {:?}", ta.shape(), tr.shape());
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(n.max(1)) {
            for (d, r) in chunk.iter_mut().zip(tr.data()) {
                *d += r;
            }
        }
        let out = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a.0) || self.rg(row.0);
        self.push(Op::AddRow(a.0, row.0), out, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.val(a.0);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| x * c).collect(),
        };
        let rg = self.rg(a.0);
        self.push(Op::Scale(a.0, c), out, rg)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.val(a.0);
        Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| f(*x)).collect(),
        }
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        let rg = self.rg(a.0);
        self.push(Op::Gelu(a.0), out, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        let rg = self.rg(a.0);
        self.push(Op::Tanh(a.0), out, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        let rg = self.rg(a.0);
        self.push(Op::Sigmoid(a.0), out, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::exp);
        let rg = self.rg(a.0);
        self.push(Op::Exp(a.0), out, rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::ln);
        let rg = self.rg(a.0);
        self.push(Op::Log(a.0), out, rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x * x);
        let rg = self.rg(a.0);
        self.push(Op::Square(a.0), out, rg)
    }

    /// `clamp(exp(a), lo, hi)`; zero gradient where the clamp is active.
    pub fn clamp_exp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.map(a, |x| x.exp().clamp(lo, hi));
        let rg = self.rg(a.0);
        self.push(Op::ClampExp { x: a.0, lo, hi }, out, rg)
    }

    /// Row-wise layer normalisation with `[1, n]` gain and bias.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        let (g, b) = (self.val(gamma.0).data(), self.val(beta.0).data());
        assert_eq!(g.len(), n);
        assert_eq!(b.len(), n);
        let mut xhat = vec![0.0; rows * n];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let x = &t.data()[r * n..(r + 1) * n];
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (x[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: out,
        };
        let rg = self.rg(a.0) || self.rg(gamma.0) || self.rg(beta.0);
        self.push(
            Op::LayerNorm {
                x: a.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                rstd,
            },
            out,
            rg,
        )
    }

    /// Row-wise softmax. `mask` (row-major, same shape, `true` = keep) zeroes
    /// the weight of masked entries; a fully masked row yields all zeros.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        if let Some(m) = mask {
            assert_eq!(m.len(), rows * n, "softmax mask shape");
        }
        let mut out = vec![0.0; rows * n];
        let mut masked_rows = 0;
        for r in 0..rows {
            let x = &t.data()[r * n..(r + 1) * n];
            let keep = |j: usize| mask.map_or(true, |m| m[r * n + j]);
            let mx = (0..n)
                .filter(|&j| keep(j))
                .map(|j| x[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                masked_rows += 1;
                continue;
            }
            let mut s = 0.0;
            for j in 0..n {
                if keep(j) {
                    let e = (x[j] - mx).exp();
                    out[r * n + j] = e;
                    s += e;
                }
            }
            for v in &mut out[r * n..(r + 1) * n] {
                *v /= s;
            }
        }
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: out,
        };
        if masked_rows > 0 {
            log::debug!("softmax: {masked_rows} row(s) with every key masked");
            self.fully_masked_rows += masked_rows;
        }
        let rg = self.rg(a.0);
        self.push(Op::Softmax(a.0), out, rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let x = &t.data()[r * n..(r + 1) * n];
            let mx = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + x.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for j in 0..n {
                out[r * n + j] = x[j] - lse;
            }
        }
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: out,
        };
        let rg = self.rg(a.0);
        self.push(Op::LogSoftmax(a.0), out, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.val(parts[0].0).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.val(p.0);
            assert_eq!(t.cols(), n, "concat_rows column mismatch");
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let rg = parts.iter().any(|p| self.rg(p.0));
        self.push(
            Op::ConcatRows(parts.iter().map(|p| p.0).collect()),
            Tensor::matrix(rows, n, data),
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.val(parts[0].0).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let t = self.val(p.0);
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                t.cols()
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * n];
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let t = self.val(p.0);
            for r in 0..rows {
                data[r * n + off..r * n + off + w].copy_from_slice(t.row_slice(r));
            }
            off += w;
        }
        let rg = parts.iter().any(|p| self.rg(p.0));
        self.push(
            Op::ConcatCols(parts.iter().map(|p| p.0).collect()),
            Tensor::matrix(rows, n, data),
            rg,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.val(a.0);
        let n = t.cols();
        assert!(start + len <= t.rows(), "slice_rows out of range");
        let data = t.data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(a.0);
        self.push(Op::SliceRows { x: a.0, start }, Tensor::matrix(len, n, data), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        assert!(start + len <= n, "slice_cols out of range");
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.data()[r * n + start..r * n + start + len]);
        }
        let rg = self.rg(a.0);
        self.push(Op::SliceCols { x: a.0, start }, Tensor::matrix(rows, len, data), rg)
    }

    /// Column-wise mean over rows, `[r, n] -> [1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        let mut data = vec![0.0; n];
        for r in 0..rows {
            for (d, v) in data.iter_mut().zip(t.row_slice(r)) {
                *d += v;
            }
        }
        for d in &mut data {
            *d /= rows as f64;
        }
        let rg = self.rg(a.0);
        self.push(Op::MeanRows(a.0), Tensor::row(data), rg)
    }

    /// Column-wise max over rows, `[r, n] -> [1, n]`. Ties go to the lowest row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        assert!(rows > 0, "max_rows on empty tensor");
        let mut data = t.row_slice(0).to_vec();
        let mut argmax = vec![0usize; n];
        for r in 1..rows {
            for (j, v) in t.row_slice(r).iter().enumerate() {
                if *v > data[j] {
                    data[j] = *v;
                    argmax[j] = r;
                }
            }
        }
        let rg = self.rg(a.0);
        self.push(Op::MaxRows { x: a.0, argmax }, Tensor::row(data), rg)
    }

    /// Column-wise max within consecutive blocks of `group` rows,
    /// `[g * group, n] -> [g, n]`. Ties go to the lowest row.
    pub fn group_max(&mut self, a: Var, group: usize) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        assert!(group > 0 && rows % group == 0, "group_max: {rows} rows in groups of {group}");
        let g = rows / group;
        let mut data = Vec::with_capacity(g * n);
        let mut argmax = Vec::with_capacity(g * n);
        for b in 0..g {
            let r0 = b * group;
            let mut best = t.row_slice(r0).to_vec();
            let mut arg = vec![r0; n];
            for r in r0 + 1..r0 + group {
                for (j, v) in t.row_slice(r).iter().enumerate() {
                    if *v > best[j] {
                        best[j] = *v;
                        arg[j] = r;
                    }
                }
            }
            data.extend(best);
            argmax.extend(arg);
        }
        let rg = self.rg(a.0);
        self.push(Op::GroupMax { x: a.0, argmax }, Tensor::matrix(g, n, data), rg)
    }

    /// Column-wise mean within consecutive blocks of `group` rows.
    pub fn group_mean(&mut self, a: Var, group: usize) -> Var {
        let t = self.val(a.0);
        let (rows, n) = (t.rows(), t.cols());
        assert!(group > 0 && rows % group == 0, "group_mean: {rows} rows in groups of {group}");
        let g = rows / group;
        let mut data = vec![0.0; g * n];
        for r in 0..rows {
            let out = &mut data[(r / group) * n..(r / group + 1) * n];
            for (d, v) in out.iter_mut().zip(t.row_slice(r)) {
                *d += v;
            }
        }
        for d in &mut data {
            *d /= group as f64;
        }
        let rg = self.rg(a.0);
        self.push(Op::GroupMean { x: a.0, group }, Tensor::matrix(g, n, data), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.val(a.0).data().iter().sum();
        let rg = self.rg(a.0);
        self.push(Op::SumAll(a.0), Tensor::scalar(s), rg)
    }

    /// Scalar element at flat `index`.
    pub fn pick(&mut self, a: Var, index: usize) -> Var {
        let v = self.val(a.0).data()[index];
        let rg = self.rg(a.0);
        self.push(Op::Pick { x: a.0, index }, Tensor::scalar(v), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = self.val(a.0);
        assert_eq!(shape.iter().product::<usize>(), t.len(), "reshape size");
        let out = Tensor {
            shape: shape.to_vec(),
            data: t.data().to_vec(),
        };
        let rg = self.rg(a.0);
        self.push(Op::Reshape(a.0), out, rg)
    }

    /// Sum of several scalars.
    pub fn add_scalars(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.add(acc, *p);
        }
        acc
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, out: Var) -> Result<Gradients, TensorError> {
        let ot = self.val(out.0);
        if ot.len() != 1 {
            return Err(TensorError::NotScalar(ot.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];
        grads[out.0] = Some(vec![1.0]);

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let y = &self.nodes[i].value;
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(p) => accumulate(&mut param_grads[p.0], g),
                &Op::MatMul(a, b) => {
                    let (ta, tb) = (self.val(a), self.val(b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if self.rg(a) {
                        // dA = dC * B^T, B stored [k, n]
                        self.acc(&mut grads, a, matmul_nt(&g, tb.data(), m, n, k));
                    }
                    if self.rg(b) {
                        let mut gb = vec![0.0; k * n];
                        matmul_tn_acc(&mut gb, ta.data(), &g, m, k, n);
                        self.acc(&mut grads, b, gb);
                    }
                }
                &Op::MatMulNT(a, b) => {
                    let (ta, tb) = (self.val(a), self.val(b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                    if self.rg(a) {
                        self.acc(&mut grads, a, matmul(&g, tb.data(), m, n, k));
                    }
                    if self.rg(b) {
                        let mut gb = vec![0.0; n * k];
                        matmul_tn_acc(&mut gb, &g, ta.data(), m, n, k);
                        self.acc(&mut grads, b, gb);
                    }
                }
                &Op::Add(a, b) => {
                    if self.rg(b) {
                        self.acc(&mut grads, b, g.clone());
                    }
                    self.acc(&mut grads, a, g);
                }
                &Op::Sub(a, b) => {
                    if self.rg(b) {
                        self.acc(&mut grads, b, g.iter().map(|v| -v).collect());
                    }
                    self.acc(&mut grads, a, g);
                }
                &Op::Mul(a, b) => {
                    let (ta, tb) = (self.val(a).data(), self.val(b).data());
                    if self.rg(a) {
                        self.acc(&mut grads, a, g.iter().zip(tb).map(|(x, y)| x * y).collect());
                    }
                    if self.rg(b) {
                        self.acc(&mut grads, b, g.iter().zip(ta).map(|(x, y)| x * y).collect());
                    }
                }
                &Op::Div(a, b) => {
                    let tb = self.val(b).data();
                    if self.rg(a) {
                        self.acc(&mut grads, a, g.iter().zip(tb).map(|(x, y)| x / y).collect());
                    }
                    if self.rg(b) {
                        let d = g.iter().zip(y.data()).zip(tb).map(|((gv, q), d)| -gv * q / d).collect();
                        self.acc(&mut grads, b, d);
                    }
                }
                &Op::AddRow(a, r) => {
                    if self.rg(r) {
                        let n = self.val(r).len();
                        let mut gr = vec![0.0; n];
                        for chunk in g.chunks(n.max(1)) {
                            for (d, v) in gr.iter_mut().zip(chunk) {
                                *d += v;
                            }
                        }
                        self.acc(&mut grads, r, gr);
                    }
                    self.acc(&mut grads, a, g);
                }
                &Op::Scale(a, c) => self.acc(&mut grads, a, g.iter().map(|v| v * c).collect()),
                &Op::Gelu(a) => {
                    let x = self.val(a).data();
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(gv, &xv)| {
                            let u = GELU_C * (xv + 0.044715 * xv * xv * xv);
                            let th = u.tanh();
                            let du = GELU_C * (1.0 + 3.0 * 0.044715 * xv * xv);
                            gv * (0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th * th) * du)
                        })
                        .collect();
                    self.acc(&mut grads, a, d);
                }
                &Op::Tanh(a) => {
                    let d = g.iter().zip(y.data()).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    self.acc(&mut grads, a, d);
                }
                &Op::Sigmoid(a) => {
                    let d = g.iter().zip(y.data()).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
                    self.acc(&mut grads, a, d);
                }
                &Op::Exp(a) => {
                    let d = g.iter().zip(y.data()).map(|(gv, yv)| gv * yv).collect();
                    self.acc(&mut grads, a, d);
                }
                &Op::Log(a) => {
                    let x = self.val(a).data();
                    let d = g.iter().zip(x).map(|(gv, xv)| gv / xv).collect();
                    self.acc(&mut grads, a, d);
                }
                &Op::Square(a) => {
                    let x = self.val(a).data();
                    let d = g.iter().zip(x).map(|(gv, xv)| 2.0 * gv * xv).collect();
                    self.acc(&mut grads, a, d);
                }
                &Op::ClampExp { x, lo, hi } => {
                    let xs = self.val(x).data();
                    let d = g
                        .iter()
                        .zip(xs)
                        .map(|(gv, xv)| {
                            let e = xv.exp();
                            if e > lo && e < hi {
                                gv * e
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.acc(&mut grads, x, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let n = self.val(gamma).len();
                    let rows = rstd.len();
                    let gm = self.val(gamma).data();
                    if self.rg(gamma) {
                        let mut gg = vec![0.0; n];
                        for r in 0..rows {
                            for j in 0..n {
                                gg[j] += g[r * n + j] * xhat[r * n + j];
                            }
                        }
                        self.acc(&mut grads, gamma, gg);
                    }
                    if self.rg(beta) {
                        let mut gb = vec![0.0; n];
                        for r in 0..rows {
                            for j in 0..n {
                                gb[j] += g[r * n + j];
                            }
                        }
                        self.acc(&mut grads, beta, gb);
                    }
                    if self.rg(x) {
                        let mut gx = vec![0.0; rows * n];
                        for r in 0..rows {
                            let mut m1 = 0.0;
                            let mut m2 = 0.0;
                            for j in 0..n {
                                let dh = g[r * n + j] * gm[j];
                                m1 += dh;
                                m2 += dh * xhat[r * n + j];
                            }
                            m1 /= n as f64;
                            m2 /= n as f64;
                            for j in 0..n {
                                let dh = g[r * n + j] * gm[j];
                                gx[r * n + j] = rstd[r] * (dh - m1 - xhat[r * n + j] * m2);
                            }
                        }
                        self.acc(&mut grads, x, gx);
                    }
                }
                &Op::Softmax(a) => {
                    let n = y.cols();
                    let mut d = vec![0.0; g.len()];
                    for (r, (yr, gr)) in y.data().chunks(n).zip(g.chunks(n)).enumerate() {
                        let s = dot(yr, gr);
                        for j in 0..n {
                            d[r * n + j] = yr[j] * (gr[j] - s);
                        }
                    }
                    self.acc(&mut grads, a, d);
                }
                &Op::LogSoftmax(a) => {
                    let n = y.cols();
                    let mut d = vec![0.0; g.len()];
                    for (r, (yr, gr)) in y.data().chunks(n).zip(g.chunks(n)).enumerate() {
                        let s: f64 = gr.iter().sum();
                        for j in 0..n {
                            d[r * n + j] = gr[j] - yr[j].exp() * s;
                        }
                    }
                    self.acc(&mut grads, a, d);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.val(p).len();
                        if self.rg(p) {
                            self.acc(&mut grads, p, g[off..off + len].to_vec());
                        }
                        off += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let n = y.cols();
                    let rows = y.rows();
                    let mut off = 0;
                    for &p in parts {
                        let w = self.val(p).cols();
                        if self.rg(p) {
                            let mut gp = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                gp.extend_from_slice(&g[r * n + off..r * n + off + w]);
                            }
                            self.acc(&mut grads, p, gp);
                        }
                        off += w;
                    }
                }
                &Op::SliceRows { x, start } => {
                    let tx = self.val(x);
                    let n = tx.cols();
                    let mut gx = vec![0.0; tx.len()];
                    gx[start * n..start * n + g.len()].copy_from_slice(&g);
                    self.acc(&mut grads, x, gx);
                }
                &Op::SliceCols { x, start } => {
                    let tx = self.val(x);
                    let (rows, n) = (tx.rows(), tx.cols());
                    let w = y.cols();
                    let mut gx = vec![0.0; tx.len()];
                    for r in 0..rows {
                        gx[r * n + start..r * n + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    self.acc(&mut grads, x, gx);
                }
                &Op::MeanRows(a) => {
                    let ta = self.val(a);
                    let rows = ta.rows();
                    let mut d = Vec::with_capacity(ta.len());
                    for _ in 0..rows {
                        d.extend(g.iter().map(|v| v / rows as f64));
                    }
                    self.acc(&mut grads, a, d);
                }
                Op::MaxRows { x, argmax } => {
                    let tx = self.val(*x);
                    let n = tx.cols();
                    let mut d = vec![0.0; tx.len()];
                    for (j, &r) in argmax.iter().enumerate() {
                        d[r * n + j] = g[j];
                    }
                    self.acc(&mut grads, *x, d);
                }
                Op::GroupMax { x, argmax } => {
                    let tx = self.val(*x);
                    let n = tx.cols();
                    let mut d = vec![0.0; tx.len()];
                    for (i, &r) in argmax.iter().enumerate() {
                        d[r * n + i % n] += g[i];
                    }
                    self.acc(&mut grads, *x, d);
                }
                &Op::GroupMean { x, group } => {
                    let tx = self.val(x);
                    let n = tx.cols();
                    let mut d = Vec::with_capacity(tx.len());
                    for r in 0..tx.rows() {
                        d.extend(g[(r / group) * n..(r / group + 1) * n].iter().map(|v| v / group as f64));
                    }
                    self.acc(&mut grads, x, d);
                }
                &Op::SumAll(a) => {
                    let len = self.val(a).len();
                    self.acc(&mut grads, a, vec![g[0]; len]);
                }
                &Op::Pick { x, index } => {
                    let mut d = vec![0.0; self.val(x).len()];
                    d[index] = g[0];
                    self.acc(&mut grads, x, d);
                }
                &Op::Reshape(a) => self.acc(&mut grads, a, g),
            }
        }
        Ok(Gradients { per_param: param_grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], idx: usize, g: Vec<f64>) {
        if self.nodes[idx].requires_grad {
            accumulate(&mut grads[idx], g);
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(s) => {
            for (a, b) in s.iter_mut().zip(&g) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Parameter gradients from one backward sweep. Parameters the output does
/// not depend on have no entry and read as zero.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    per_param: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.per_param.get(id.0).and_then(|g| g.as_deref())
    }

    /// Dense gradient for `id` (zeros when disconnected).
    pub fn dense(&self, id: ParamId, store: &ParamStore) -> Vec<f64> {
        self.get(id)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; store.get(id).len()])
    }

    /// One tensor per parameter, shaped like the store.
    pub fn to_tensors(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .ids()
            .map(|id| {
                Tensor::new(store.get(id).shape().to_vec(), self.dense(id, store)).expect("shape")
            })
            .collect()
    }
}

/// A graph declaration: named input shapes plus a builder that records the
/// computation on a tape and names its outputs.
pub struct GraphSpec<'a> {
    pub inputs: Vec<(String, Vec<usize>)>,
    #[allow(clippy::type_complexity)]
    pub build: Box<dyn Fn(&mut Tape, &[Var]) -> Vec<(String, Var)> + 'a>,
}

pub struct Evaluated<'p> {
    pub tape: Tape<'p>,
    pub outputs: BTreeMap<String, Var>,
}

impl Evaluated<'_> {
    pub fn output(&self, name: &str) -> Option<&Tensor> {
        self.outputs.get(name).map(|v| self.tape.value(*v))
    }
}

/// Validates inputs against the declaration, records the graph and checks
/// every intermediate for finiteness.
pub fn eval_forward<'p>(
    spec: &GraphSpec,
    params: &'p ParamStore,
    inputs: &BTreeMap<String, Tensor>,
) -> Result<Evaluated<'p>, TensorError> {
    let mut tape = Tape::new(params);
    let mut vars = Vec::with_capacity(spec.inputs.len());
    for (name, shape) in &spec.inputs {
        let t = inputs
            .get(name)
            .ok_or_else(|| TensorError::MissingInput(name.clone()))?;
        if t.shape() != shape.as_slice() {
            return Err(TensorError::ShapeMismatch {
                name: name.clone(),
                expected: shape.clone(),
                actual: t.shape().to_vec(),
            });
        }
        vars.push(tape.constant(t.clone()));
    }
    let outputs = (spec.build)(&mut tape, &vars).into_iter().collect();
    if let Some(node) = tape.first_non_finite() {
        return Err(TensorError::NonFinite { node });
    }
    Ok(Evaluated { tape, outputs })
}

pub fn eval_backward(tape: &Tape, output: Var) -> Result<Gradients, TensorError> {
    tape.backward(output)
}
