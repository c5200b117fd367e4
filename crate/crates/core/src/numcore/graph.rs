//! Define-by-run reverse-mode differentiation over [`Tensor`]s.
//!
//! Every forward operation appends one node to the graph. Node ids are
//! handed out in creation order, so the node list is always a valid
//! topological order and `backward` is a single reverse sweep.

use super::tensor::{Scalar, Tensor};
use crate::error::{dim_err, Error, Result};

/// Norm floor below which [`Graph::l2_normalize`] refuses to divide.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Pointwise(NodeId, Activation),
    Sum(NodeId),
    L2Normalize(NodeId),
    MaskedSoftmax(NodeId, Vec<bool>),
    Row(NodeId, usize),
    StackRows(Vec<NodeId>),
    Reshape(NodeId),
    Conv1dFull {
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: usize,
        cols: Tensor<T>,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    MeanRows {
        x: NodeId,
        n: usize,
    },
    MarginRanking {
        sim: NodeId,
        margin: T,
    },
    BceWithLogits {
        z: NodeId,
        y: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Computation graph for one forward/backward pass.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> NodeId {
        self.nodes.push(Node { value, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn tracked(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].tracked)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Gradient accumulated by the last backward pass, if the node was reached.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }

    /// `W x + b` for a vector `x[n]`, or `X Wᵀ + b` row by row for `X[r×n]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (m, n) = wv.dims2()?;
        let (rows, is_vec) = match xv.shape() {
            [len] if *len == n => (1, true),
            [r, c] if *c == n => (*r, false),
            _ => return Err(dim_err("affine", wv.shape(), xv.shape())),
        };
        if let Some(b) = b {
            if self.value(b).shape() != [m] {
                return Err(dim_err("affine bias", &[m], self.value(b).shape()));
            }
        }
        let mut out = vec![T::zero(); rows * m];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for r in 0..rows {
                out[r * m..(r + 1) * m].copy_from_slice(bv);
            }
        }
        // out[r×m] += X[r×n] · Wᵀ[n×m]
        T::gemm_strided(
            rows,
            n,
            m,
            xv.data(),
            n as isize,
            1,
            wv.data(),
            1,
            n as isize,
            &mut out,
        );
        let shape = if is_vec { vec![m] } else { vec![rows, m] };
        let tracked = self.tracked(&[x, w]) || b.is_some_and(|b| self.tracked(&[b]));
        Ok(self.push(Tensor::new(shape, out)?, Op::Affine { x, w, b }, tracked))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).matmul(self.value(b))?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), tracked))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).transpose()?;
        let tracked = self.tracked(&[a]);
        Ok(self.push(out, Op::Transpose(a), tracked))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), tracked))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), tracked))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), tracked))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let out = self.value(a).map(|x| x * c);
        let tracked = self.tracked(&[a]);
        self.push(out, Op::Scale(a, c), tracked)
    }

    pub fn pointwise(&mut self, a: NodeId, f: Activation) -> NodeId {
        let out = self.value(a).map(|x| match f {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(T::zero()),
        });
        let tracked = self.tracked(&[a]);
        self.push(out, Op::Pointwise(a, f), tracked)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.pointwise(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.pointwise(a, Activation::Sigmoid)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.pointwise(a, Activation::Relu)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let out = Tensor::scalar(self.value(a).sum());
        let tracked = self.tracked(&[a]);
        self.push(out, Op::Sum(a), tracked)
    }

    /// `x / ‖x‖₂` for a vector.
    pub fn l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        if v.rank() != 1 {
            return Err(dim_err("l2_normalize", v.shape(), &[v.len()]));
        }
        let norm = v.norm();
        let n = norm.to_f64().unwrap_or(f64::NAN);
        if n.is_nan() || n <= NORM_FLOOR {
            return Err(Error::DegenerateVector {
                norm: n,
            });
        }
        let out = v.map(|x| x / norm);
        let tracked = self.tracked(&[a]);
        Ok(self.push(out, Op::L2Normalize(a), tracked))
    }

    /// Softmax over the unmasked entries of a vector; masked entries are 0.
    /// `mask[t] == true` marks a valid position.
    pub fn masked_time_softmax(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let out = masked_softmax(self.value(a).data(), mask)
            .map_err(|e| match e {
                Error::Dimension { left, right, .. } => Error::Dimension {
                    op: "masked_time_softmax",
                    left,
                    right,
                },
                e => e,
            })?;
        let tracked = self.tracked(&[a]);
        Ok(self.push(Tensor::vector(out), Op::MaskedSoftmax(a, mask.to_vec()), tracked))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let v = self.value(a);
        let (r, _) = v.dims2()?;
        if i >= r {
            return Err(Error::OutOfRange { index: i, len: r });
        }
        let out = Tensor::vector(v.row(i).to_vec());
        let tracked = self.tracked(&[a]);
        Ok(self.push(out, Op::Row(a, i), tracked))
    }

    /// Stacks equal-length vectors into a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows.first().ok_or(Error::EmptySequence("stack_rows"))?;
        let n = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            let v = self.value(r);
            if v.rank() != 1 || v.len() != n {
                return Err(dim_err("stack_rows", &[n], v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let out = Tensor::matrix(rows.len(), n, data)?;
        let tracked = self.tracked(rows);
        Ok(self.push(out, Op::StackRows(rows.to_vec()), tracked))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let out = self.value(a).clone().reshaped(shape)?;
        let tracked = self.tracked(&[a]);
        Ok(self.push(out, Op::Reshape(a), tracked))
    }

    /// One-dimensional convolution with full border padding.
    ///
    /// `x` is `T×D`, `k` is `s×D×d`, `b` is `d`. The input is padded with
    /// `s−1` zero frames on both sides and windows start at `0, z, 2z, …`
    /// wherever a full window fits, giving `floor((T+s−2)/z)+1` output rows.
    pub fn conv1d_full(&mut self, x: NodeId, k: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let kv = self.value(k);
        let (t_in, d_in) = xv.dims2()?;
        let (s, kd, d_out) = match kv.shape() {
            [s, kd, d] => (*s, *kd, *d),
            other => return Err(dim_err("conv1d_full kernel", other, &[0, d_in, 0])),
        };
        if kd != d_in {
            return Err(dim_err("conv1d_full", xv.shape(), kv.shape()));
        }
        if self.value(b).shape() != [d_out] {
            return Err(dim_err("conv1d_full bias", &[d_out], self.value(b).shape()));
        }
        if stride == 0 || s == 0 {
            return Err(Error::Config("conv stride and length must be positive".into()));
        }
        if t_in == 0 {
            return Err(Error::EmptySequence("conv1d_full"));
        }
        let t_out = conv_output_len(t_in, s, stride);
        let width = s * d_in;
        let mut cols = vec![T::zero(); t_out * width];
        for j in 0..t_out {
            for a in 0..s {
                // padded index j*z + a maps to input frame j*z + a - (s-1)
                let p = j * stride + a;
                if p + 1 < s || p + 1 - s >= t_in {
                    continue;
                }
                let src = p + 1 - s;
                cols[j * width + a * d_in..j * width + (a + 1) * d_in]
                    .copy_from_slice(xv.row(src));
            }
        }
        let mut out = vec![T::zero(); t_out * d_out];
        let bv = self.value(b).data();
        for j in 0..t_out {
            out[j * d_out..(j + 1) * d_out].copy_from_slice(bv);
        }
        T::gemm_acc(t_out, width, d_out, &cols, kv.data(), &mut out);
        let cols = Tensor::matrix(t_out, width, cols)?;
        let out = Tensor::matrix(t_out, d_out, out)?;
        let tracked = self.tracked(&[x, k, b]);
        Ok(self.push(
            out,
            Op::Conv1dFull {
                x,
                k,
                b,
                stride,
                cols,
            },
            tracked,
        ))
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let tv = self.value(table);
        let (r, c) = tv.dims2()?;
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            if i >= r {
                return Err(Error::Vocabulary { id: i, size: r });
            }
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::matrix(ids.len(), c, data)?;
        let tracked = self.tracked(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            tracked,
        ))
    }

    /// Mean of the first `n` rows of a matrix.
    pub fn mean_rows(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let v = self.value(a);
        let (r, c) = v.dims2()?;
        if n == 0 || n > r {
            return Err(Error::OutOfRange { index: n, len: r });
        }
        let mut out = vec![T::zero(); c];
        for i in 0..n {
            for (o, &x) in out.iter_mut().zip(v.row(i)) {
                *o = *o + x;
            }
        }
        let inv = T::one() / T::of(n as f64);
        out.iter_mut().for_each(|o| *o = *o * inv);
        let tracked = self.tracked(&[a]);
        Ok(self.push(Tensor::vector(out), Op::MeanRows { x: a, n }, tracked))
    }

    /// Bidirectional hinge ranking loss from a similarity matrix whose
    /// diagonal holds the matched pairs:
    /// `Σ_j Σ_{j'≠j} max(0, m − S_jj + S_j'j) + max(0, m − S_jj + S_jj')`.
    pub fn margin_ranking(&mut self, sim: NodeId, margin: T) -> Result<NodeId> {
        let sv = self.value(sim);
        let (n, n2) = sv.dims2()?;
        if n != n2 {
            return Err(dim_err("margin_ranking", &[n, n2], &[n, n]));
        }
        let s = |a: usize, b: usize| sv.data()[a * n + b];
        let mut total = T::zero();
        for j in 0..n {
            for o in 0..n {
                if o == j {
                    continue;
                }
                total = total + (margin + (s(o, j) - s(j, j))).max(T::zero());
                total = total + (margin + (s(j, o) - s(j, j))).max(T::zero());
            }
        }
        let tracked = self.tracked(&[sim]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::MarginRanking { sim, margin },
            tracked,
        ))
    }

    /// Mean binary cross-entropy of logits `z[n]` against 0/1 targets.
    pub fn bce_with_logits(&mut self, z: NodeId, targets: &[T]) -> Result<NodeId> {
        let zv = self.value(z);
        if zv.len() != targets.len() || zv.is_empty() {
            return Err(dim_err("bce_with_logits", zv.shape(), &[targets.len()]));
        }
        let n = T::of(targets.len() as f64);
        let total = zv
            .data()
            .iter()
            .zip(targets)
            .fold(T::zero(), |acc, (&z, &y)| acc + softplus(z) - y * z);
        let tracked = self.tracked(&[z]);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::BceWithLogits {
                z,
                y: targets.to_vec(),
            },
            tracked,
        ))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&mut self, out: NodeId) -> Result<()> {
        if self.value(out).len() != 1 {
            return Err(dim_err("backward", self.shape(out), &[]));
        }
        let seed = self.value(out).map(|_| T::one());
        self.backward_with(out, seed)
    }

    /// Backpropagates an arbitrary upstream gradient `seed` from `out`.
    /// Gradients of previous passes are discarded.
    pub fn backward_with(&mut self, out: NodeId, seed: Tensor<T>) -> Result<()> {
        if seed.shape() != self.shape(out) {
            return Err(dim_err("backward seed", self.shape(out), seed.shape()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, g: Tensor<T>) {
        if !self.nodes[id.0].tracked {
            return;
        }
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, g: &Tensor<T>) -> Result<()> {
        let node = &self.nodes[i];
        let mut pending: Vec<(NodeId, Tensor<T>)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (m, n) = wv.dims2()?;
                let rows = g.len() / m;
                let gd = g.data();
                if self.nodes[w.0].tracked {
                    // gW[m×n] = Gᵀ[m×r] · X[r×n]
                    let mut gw = vec![T::zero(); m * n];
                    T::gemm_strided(m, rows, n, gd, 1, m as isize, xv.data(), n as isize, 1, &mut gw);
                    pending.push((*w, Tensor::matrix(m, n, gw)?));
                }
                if self.nodes[x.0].tracked {
                    // gX[r×n] = G[r×m] · W[m×n]
                    let mut gx = vec![T::zero(); rows * n];
                    T::gemm_acc(rows, m, n, gd, wv.data(), &mut gx);
                    pending.push((*x, Tensor::new(xv.shape().to_vec(), gx)?));
                }
                if let Some(b) = b {
                    let mut gb = vec![T::zero(); m];
                    for r in 0..rows {
                        for (acc, &v) in gb.iter_mut().zip(&gd[r * m..(r + 1) * m]) {
                            *acc = *acc + v;
                        }
                    }
                    pending.push((*b, Tensor::vector(gb)));
                }
            }
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = av.dims2()?;
                let (_, n) = bv.dims2()?;
                if self.nodes[a.0].tracked {
                    // gA = G · Bᵀ
                    let mut ga = vec![T::zero(); m * k];
                    T::gemm_strided(m, n, k, g.data(), n as isize, 1, bv.data(), 1, n as isize, &mut ga);
                    pending.push((*a, Tensor::matrix(m, k, ga)?));
                }
                if self.nodes[b.0].tracked {
                    // gB = Aᵀ · G
                    let mut gb = vec![T::zero(); k * n];
                    T::gemm_strided(k, m, n, av.data(), 1, k as isize, g.data(), n as isize, 1, &mut gb);
                    pending.push((*b, Tensor::matrix(k, n, gb)?));
                }
            }
            Op::Transpose(a) => pending.push((*a, g.transpose()?)),
            Op::Add(a, b) => {
                pending.push((*a, g.clone()));
                pending.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                pending.push((*a, g.clone()));
                pending.push((*b, g.map(|v| -v)));
            }
            Op::Mul(a, b) => {
                pending.push((*a, g.zip_map(self.value(*b), |gv, y| gv * y)));
                pending.push((*b, g.zip_map(self.value(*a), |gv, x| gv * x)));
            }
            Op::Scale(a, c) => {
                let c = *c;
                pending.push((*a, g.map(|v| v * c)));
            }
            Op::Pointwise(a, f) => {
                let y = &node.value;
                let ga = match f {
                    Activation::Tanh => g.zip_map(y, |gv, yv| gv * (T::one() - yv * yv)),
                    Activation::Sigmoid => g.zip_map(y, |gv, yv| gv * yv * (T::one() - yv)),
                    Activation::Relu => g.zip_map(y, |gv, yv| if yv > T::zero() { gv } else { T::zero() }),
                };
                pending.push((*a, ga));
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                pending.push((*a, Tensor::filled(self.shape(*a), gv)));
            }
            Op::L2Normalize(a) => {
                let y = &node.value;
                let norm = self.value(*a).norm();
                let dot = y.data().iter().zip(g.data()).fold(T::zero(), |acc, (&yv, &gv)| acc + yv * gv);
                pending.push((*a, g.zip_map(y, |gv, yv| (gv - yv * dot) / norm)));
            }
            Op::MaskedSoftmax(a, mask) => {
                let y = &node.value;
                let dot = y.data().iter().zip(g.data()).fold(T::zero(), |acc, (&yv, &gv)| acc + yv * gv);
                let mut ga = g.zip_map(y, |gv, yv| yv * (gv - dot));
                for (v, &keep) in ga.data_mut().iter_mut().zip(mask) {
                    if !keep {
                        *v = T::zero();
                    }
                }
                pending.push((*a, ga));
            }
            Op::Row(a, r) => {
                let mut ga = Tensor::zeros(self.shape(*a));
                let c = g.len();
                ga.data_mut()[r * c..(r + 1) * c].copy_from_slice(g.data());
                pending.push((*a, ga));
            }
            Op::StackRows(rows) => {
                for (r, &id) in rows.iter().enumerate() {
                    pending.push((id, Tensor::vector(g.row(r).to_vec())));
                }
            }
            Op::Reshape(a) => {
                pending.push((*a, g.clone().reshaped(self.shape(*a).to_vec())?));
            }
            Op::Conv1dFull {
                x,
                k,
                b,
                stride,
                cols,
            } => {
                let kv = self.value(*k);
                let (s, d_in, d_out) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
                let (t_out, width) = cols.dims2()?;
                let gd = g.data();
                if self.nodes[k.0].tracked {
                    // gK[width×d] = colsᵀ · G
                    let mut gk = vec![T::zero(); width * d_out];
                    T::gemm_strided(width, t_out, d_out, cols.data(), 1, width as isize, gd, d_out as isize, 1, &mut gk);
                    pending.push((*k, Tensor::new(vec![s, d_in, d_out], gk)?));
                }
                if self.nodes[b.0].tracked {
                    let mut gb = vec![T::zero(); d_out];
                    for j in 0..t_out {
                        for (acc, &v) in gb.iter_mut().zip(&gd[j * d_out..(j + 1) * d_out]) {
                            *acc = *acc + v;
                        }
                    }
                    pending.push((*b, Tensor::vector(gb)));
                }
                if self.nodes[x.0].tracked {
                    // gcols[t_out×width] = G · Kᵀ, then scatter back to frames
                    let mut gcols = vec![T::zero(); t_out * width];
                    T::gemm_strided(t_out, d_out, width, gd, d_out as isize, 1, kv.data(), 1, d_out as isize, &mut gcols);
                    let t_in = self.shape(*x)[0];
                    let mut gx = Tensor::zeros(&[t_in, d_in]);
                    for j in 0..t_out {
                        for a in 0..s {
                            let p = j * stride + a;
                            if p + 1 < s || p + 1 - s >= t_in {
                                continue;
                            }
                            let src = p + 1 - s;
                            let from = &gcols[j * width + a * d_in..j * width + (a + 1) * d_in];
                            for (acc, &v) in gx.data_mut()[src * d_in..(src + 1) * d_in].iter_mut().zip(from) {
                                *acc = *acc + v;
                            }
                        }
                    }
                    pending.push((*x, gx));
                }
            }
            Op::Gather { table, ids } => {
                let mut gt = Tensor::zeros(self.shape(*table));
                let c = gt.cols();
                for (r, &id) in ids.iter().enumerate() {
                    for (acc, &v) in gt.data_mut()[id * c..(id + 1) * c].iter_mut().zip(g.row(r)) {
                        *acc = *acc + v;
                    }
                }
                pending.push((*table, gt));
            }
            Op::MeanRows { x, n } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                let c = g.len();
                let inv = T::one() / T::of(*n as f64);
                for r in 0..*n {
                    for (acc, &v) in gx.data_mut()[r * c..(r + 1) * c].iter_mut().zip(g.data()) {
                        *acc = v * inv;
                    }
                }
                pending.push((*x, gx));
            }
            Op::MarginRanking { sim, margin } => {
                let sv = self.value(*sim);
                let n = sv.rows();
                let s = |a: usize, b: usize| sv.data()[a * n + b];
                let up = g.data()[0];
                let mut gs = Tensor::zeros(&[n, n]);
                let gd = gs.data_mut();
                for j in 0..n {
                    for o in 0..n {
                        if o == j {
                            continue;
                        }
                        if *margin + (s(o, j) - s(j, j)) > T::zero() {
                            gd[j * n + j] = gd[j * n + j] - up;
                            gd[o * n + j] = gd[o * n + j] + up;
                        }
                        if *margin + (s(j, o) - s(j, j)) > T::zero() {
                            gd[j * n + j] = gd[j * n + j] - up;
                            gd[j * n + o] = gd[j * n + o] + up;
                        }
                    }
                }
                pending.push((*sim, gs));
            }
            Op::BceWithLogits { z, y } => {
                let zv = self.value(*z);
                let scale = g.data()[0] / T::of(y.len() as f64);
                let gz: Vec<T> = zv
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(&z, &t)| (sigmoid(z) - t) * scale)
                    .collect();
                pending.push((*z, Tensor::new(zv.shape().to_vec(), gz)?));
            }
        }
        for (id, grad) in pending {
            self.accumulate(id, grad);
        }
        Ok(())
    }
}

/// Number of output rows of [`Graph::conv1d_full`].
pub fn conv_output_len(t_in: usize, length: usize, stride: usize) -> usize {
    (t_in + length - 2) / stride + 1
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Max-subtracted softmax over the positions where `mask` is true.
pub fn masked_softmax<T: Scalar>(logits: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if logits.len() != mask.len() {
        return Err(dim_err("masked_softmax", &[logits.len()], &[mask.len()]));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or(Error::EmptySequence("all positions masked"))?;
    let mut out: Vec<T> = logits
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { (v - max).exp() } else { T::zero() })
        .collect();
    let total = out.iter().fold(T::zero(), |a, &v| a + v);
    out.iter_mut().for_each(|v| *v = *v / total);
    Ok(out)
}
