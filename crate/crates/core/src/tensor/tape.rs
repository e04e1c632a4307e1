//! Reverse-mode tape.
//!
//! Ops append nodes that hold the computed value plus enough bookkeeping to
//! run the chain rule backwards. Node indices only grow, so every parent of
//! a node sits strictly before it and a single reverse sweep suffices.

use super::kernels::matmul_into;
use super::Tensor;
use crate::error::{Result, SrxError};

const LAYER_NORM_EPS: f64 = 1e-5;
const L2_NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`]. Only valid for the tape that made it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: TensorId, b: TensorId },
    MatVec { a: TensorId, x: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    AddBias { a: TensorId, b: TensorId },
    AddScalar { a: TensorId },
    Scale { a: TensorId, c: f64 },
    Relu { a: TensorId },
    Softmax { a: TensorId, axis: usize },
    LayerNorm { a: TensorId, gain: TensorId, bias: TensorId },
    Concat { parts: Vec<TensorId>, axis: usize },
    Stack { parts: Vec<TensorId> },
    Transpose { a: TensorId },
    MeanPool { a: TensorId, axis: usize },
    MaxPool { a: TensorId, axis: usize, arg: Vec<usize> },
    L2Normalize { a: TensorId },
    Sum { a: TensorId },
    SelectRow { a: TensorId, row: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of one scalar root with respect to every tape node that can
/// influence it. Nodes cut off by `requires_grad = false` stay `None`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn wrt(&self, id: TensorId) -> Result<&Tensor> {
        self.get(id)
            .ok_or_else(|| SrxError::contract(format!("no gradient reached node {}", id.0)))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that participates in differentiation.
    pub fn input(&mut self, value: Tensor) -> TensorId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation; everything derived only from
    /// constants is pruned from the backward sweep.
    pub fn constant(&mut self, value: Tensor) -> TensorId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> TensorId {
        debug_assert!(value.is_finite(), "non-finite value out of {op:?}");
        self.nodes.push(Node { value, op, requires_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ---- ops ----

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, ka) = self.value(a).dims2()?;
        let (kb, n) = self.value(b).dims2()?;
        if ka != kb {
            return Err(SrxError::shape(format!("matmul {m}x{ka} * {kb}x{n}")));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_into(self.value(a).data(), self.value(b).data(), m, ka, n, out.data_mut());
        Ok(self.push(out, Op::MatMul { a, b }, self.rg(&[a, b])))
    }

    pub fn matvec(&mut self, a: TensorId, x: TensorId) -> Result<TensorId> {
        let (m, n) = self.value(a).dims2()?;
        if self.value(x).shape() != [n] {
            return Err(SrxError::shape(format!(
                "matvec {m}x{n} * {:?}",
                self.value(x).shape()
            )));
        }
        let av = self.value(a);
        let xv = self.value(x).data();
        let out = Tensor::from_fn(&[m], |i| {
            av.row(i).iter().zip(xv).map(|(p, q)| p * q).sum()
        });
        Ok(self.push(out, Op::MatVec { a, x }, self.rg(&[a, x])))
    }

    fn same_shape(&self, a: TensorId, b: TensorId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(SrxError::shape(format!(
                "{what} on {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_values(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add { a, b }, self.rg(&[a, b])))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_values(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub { a, b }, self.rg(&[a, b])))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_values(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul { a, b }, self.rg(&[a, b])))
    }

    fn zip_values(&self, a: TensorId, b: TensorId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b).data();
        Tensor::from_fn(av.shape(), |i| f(av.data()[i], bv[i]))
    }

    /// Row-broadcast add: matrix `[m, n]` plus vector `[n]`.
    pub fn add_bias(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, n) = self.value(a).dims2()?;
        if self.value(b).shape() != [n] {
            return Err(SrxError::shape(format!(
                "add_bias {m}x{n} + {:?}",
                self.value(b).shape()
            )));
        }
        let av = self.value(a);
        let bv = self.value(b).data();
        let out = Tensor::from_fn(&[m, n], |i| av.data()[i] + bv[i % n]);
        Ok(self.push(out, Op::AddBias { a, b }, self.rg(&[a, b])))
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i] + c);
        let rg = self.rg(&[a]);
        self.push(out, Op::AddScalar { a }, rg)
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i] * c);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale { a, c }, rg)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i].max(0.0));
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu { a }, rg)
    }

    /// Softmax along `axis`. Vectors take axis 0; matrices take 1 for
    /// per-row (the usual attention case) or 0 for per-column.
    pub fn softmax(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        let v = self.value(a);
        check_axis(v, axis, "softmax")?;
        let mut out = v.clone();
        for idx in slice_indices(v.shape(), axis) {
            softmax_slice(out.data_mut(), &idx);
        }
        Ok(self.push(out, Op::Softmax { a, axis }, self.rg(&[a])))
    }

    /// Normalize the last axis to zero mean and unit variance, then apply
    /// an elementwise gain and bias of that axis length.
    pub fn layer_norm(&mut self, a: TensorId, gain: TensorId, bias: TensorId) -> Result<TensorId> {
        let v = self.value(a);
        let width = last_axis_len(v)?;
        for (id, what) in [(gain, "gain"), (bias, "bias")] {
            if self.value(id).shape() != [width] {
                return Err(SrxError::shape(format!(
                    "layer_norm {what} {:?}, want [{width}]",
                    self.value(id).shape()
                )));
            }
        }
        let gd = self.value(gain).data();
        let bd = self.value(bias).data();
        let v = self.value(a);
        let mut out = v.clone();
        for s in 0..(v.len() / width) {
            let seg = &mut out.data_mut()[s * width..(s + 1) * width];
            let (mean, inv_sigma) = norm_stats(seg);
            for (j, x) in seg.iter_mut().enumerate() {
                *x = gd[j] * ((*x - mean) * inv_sigma) + bd[j];
            }
        }
        Ok(self.push(out, Op::LayerNorm { a, gain, bias }, self.rg(&[a, gain, bias])))
    }

    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(SrxError::shape("concat of zero tensors"));
        }
        let rank = self.value(parts[0]).rank();
        if rank == 0 || axis >= rank {
            return Err(SrxError::shape(format!("concat axis {axis} on rank {rank}")));
        }
        if parts.iter().any(|p| self.value(*p).rank() != rank) {
            return Err(SrxError::shape("concat of mixed ranks"));
        }
        let out = if rank == 1 {
            let data: Vec<f64> = parts
                .iter()
                .flat_map(|p| self.value(*p).data().iter().copied())
                .collect();
            Tensor::vector(data)
        } else {
            let (r0, c0) = self.value(parts[0]).dims2()?;
            if axis == 0 {
                let mut rows = 0;
                for p in parts {
                    let (r, c) = self.value(*p).dims2()?;
                    if c != c0 {
                        return Err(SrxError::shape("concat axis 0 with unequal widths"));
                    }
                    rows += r;
                }
                let data: Vec<f64> = parts
                    .iter()
                    .flat_map(|p| self.value(*p).data().iter().copied())
                    .collect();
                Tensor::matrix(rows, c0, data)?
            } else {
                let mut cols = 0;
                for p in parts {
                    let (r, c) = self.value(*p).dims2()?;
                    if r != r0 {
                        return Err(SrxError::shape("concat axis 1 with unequal heights"));
                    }
                    cols += c;
                }
                let mut data = Vec::with_capacity(r0 * cols);
                for i in 0..r0 {
                    for p in parts {
                        data.extend_from_slice(self.value(*p).row(i));
                    }
                }
                Tensor::matrix(r0, cols, data)?
            }
        };
        Ok(self.push(out, Op::Concat { parts: parts.to_vec(), axis }, self.rg(parts)))
    }

    /// Stack equal-shape tensors along a new leading axis: scalars become a
    /// vector, vectors become a matrix of rows.
    pub fn stack(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(SrxError::shape("stack of zero tensors"));
        }
        let shape = self.value(parts[0]).shape().to_vec();
        if parts.iter().any(|p| self.value(*p).shape() != shape) {
            return Err(SrxError::shape("stack of mixed shapes"));
        }
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|p| self.value(*p).data().iter().copied())
            .collect();
        let out = match shape.as_slice() {
            [] => Tensor::vector(data),
            [d] => Tensor::matrix(parts.len(), *d, data)?,
            s => return Err(SrxError::shape(format!("stack of rank {} tensors", s.len()))),
        };
        Ok(self.push(out, Op::Stack { parts: parts.to_vec() }, self.rg(parts)))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.value(a).dims2()?;
        let v = self.value(a);
        let out = Tensor::from_fn(&[c, r], |i| v.at(i % r, i / r));
        Ok(self.push(out, Op::Transpose { a }, self.rg(&[a])))
    }

    /// Mean over `axis` of a matrix; axis 0 gives column means, 1 row means.
    pub fn mean_pool(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        let v = self.value(a);
        let (r, c) = v.dims2()?;
        check_axis(v, axis, "mean_pool")?;
        let out = if axis == 0 {
            Tensor::from_fn(&[c], |j| (0..r).map(|i| v.at(i, j)).sum::<f64>() / r as f64)
        } else {
            Tensor::from_fn(&[r], |i| v.row(i).iter().sum::<f64>() / c as f64)
        };
        Ok(self.push(out, Op::MeanPool { a, axis }, self.rg(&[a])))
    }

    /// Max over `axis` of a matrix. Ties resolve to the lowest index.
    pub fn max_pool(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        let v = self.value(a);
        let (r, c) = v.dims2()?;
        check_axis(v, axis, "max_pool")?;
        let (out_len, slice_len) = if axis == 0 { (c, r) } else { (r, c) };
        let mut arg = vec![0usize; out_len];
        let mut data = vec![0.0; out_len];
        for o in 0..out_len {
            let pick = |i: usize| if axis == 0 { v.at(i, o) } else { v.at(o, i) };
            let (mut best_i, mut best) = (0usize, pick(0));
            for i in 1..slice_len {
                if pick(i) > best {
                    best = pick(i);
                    best_i = i;
                }
            }
            arg[o] = best_i;
            data[o] = best;
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::vector(data), Op::MaxPool { a, axis, arg }, rg))
    }

    /// Scale to unit Euclidean norm: whole vector, or each row of a matrix.
    pub fn l2_normalize(&mut self, a: TensorId) -> Result<TensorId> {
        let v = self.value(a);
        let width = last_axis_len(v)?;
        let mut out = v.clone();
        for s in 0..(v.len() / width) {
            let seg = &mut out.data_mut()[s * width..(s + 1) * width];
            let r = l2_radius(seg);
            for x in seg.iter_mut() {
                *x /= r;
            }
        }
        Ok(self.push(out, Op::L2Normalize { a }, self.rg(&[a])))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(total), Op::Sum { a }, rg)
    }

    pub fn select_row(&mut self, a: TensorId, row: usize) -> Result<TensorId> {
        let (r, _) = self.value(a).dims2()?;
        if row >= r {
            return Err(SrxError::shape(format!("select_row {row} of {r}")));
        }
        let out = Tensor::vector(self.value(a).row(row).to_vec());
        Ok(self.push(out, Op::SelectRow { a, row }, self.rg(&[a])))
    }

    /// Mean of all elements as a scalar.
    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    // ---- backward ----

    /// Reverse sweep from a scalar `root`. Call after the forward pass is
    /// fully built; the tape itself is left untouched.
    pub fn backward(&self, root: TensorId) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(SrxError::contract(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[root.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let g = match grads[idx].clone() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_parents(idx, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(
        &self,
        grads: &'g mut [Option<Tensor>],
        id: TensorId,
    ) -> Option<&'g mut Tensor> {
        if !self.nodes[id.0].requires_grad {
            return None;
        }
        let shape = self.value(id).shape().to_vec();
        Some(grads[id.0].get_or_insert_with(|| Tensor::zeros(&shape)))
    }

    fn accumulate_parents(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = self.value(*a).dims2().unwrap();
                let n = self.value(*b).shape()[1];
                if let Some(da) = self.acc(grads, *a) {
                    let bt = transpose_values(self.value(*b));
                    let mut tmp = vec![0.0; m * k];
                    matmul_into(g.data(), bt.data(), m, n, k, &mut tmp);
                    add_assign(da.data_mut(), &tmp);
                }
                if let Some(db) = self.acc(grads, *b) {
                    let at = transpose_values(self.value(*a));
                    let mut tmp = vec![0.0; k * n];
                    matmul_into(at.data(), g.data(), k, m, n, &mut tmp);
                    add_assign(db.data_mut(), &tmp);
                }
            }
            Op::MatVec { a, x } => {
                let (m, n) = self.value(*a).dims2().unwrap();
                let xv = self.value(*x).data().to_vec();
                if let Some(da) = self.acc(grads, *a) {
                    for i in 0..m {
                        let gi = g.data()[i];
                        for (j, xj) in xv.iter().enumerate() {
                            da.data_mut()[i * n + j] += gi * xj;
                        }
                    }
                }
                let av = self.value(*a);
                if let Some(dx) = self.acc(grads, *x) {
                    for j in 0..n {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += av.at(i, j) * g.data()[i];
                        }
                        dx.data_mut()[j] += s;
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(da) = self.acc(grads, *a) {
                    add_assign(da.data_mut(), g.data());
                }
                if let Some(db) = self.acc(grads, *b) {
                    add_assign(db.data_mut(), g.data());
                }
            }
            Op::Sub { a, b } => {
                if let Some(da) = self.acc(grads, *a) {
                    add_assign(da.data_mut(), g.data());
                }
                if let Some(db) = self.acc(grads, *b) {
                    for (d, gv) in db.data_mut().iter_mut().zip(g.data()) {
                        *d -= gv;
                    }
                }
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data().to_vec();
                let bv = self.value(*b).data().to_vec();
                if let Some(da) = self.acc(grads, *a) {
                    for (i, d) in da.data_mut().iter_mut().enumerate() {
                        *d += g.data()[i] * bv[i];
                    }
                }
                if let Some(db) = self.acc(grads, *b) {
                    for (i, d) in db.data_mut().iter_mut().enumerate() {
                        *d += g.data()[i] * av[i];
                    }
                }
            }
            Op::AddBias { a, b } => {
                let (m, n) = self.value(*a).dims2().unwrap();
                if let Some(da) = self.acc(grads, *a) {
                    add_assign(da.data_mut(), g.data());
                }
                if let Some(db) = self.acc(grads, *b) {
                    for j in 0..n {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += g.data()[i * n + j];
                        }
                        db.data_mut()[j] += s;
                    }
                }
            }
            Op::AddScalar { a } => {
                if let Some(da) = self.acc(grads, *a) {
                    add_assign(da.data_mut(), g.data());
                }
            }
            Op::Scale { a, c } => {
                let c = *c;
                if let Some(da) = self.acc(grads, *a) {
                    for (d, gv) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += c * gv;
                    }
                }
            }
            Op::Relu { a } => {
                let av = self.value(*a).data().to_vec();
                if let Some(da) = self.acc(grads, *a) {
                    for (i, d) in da.data_mut().iter_mut().enumerate() {
                        if av[i] > 0.0 {
                            *d += g.data()[i];
                        }
                    }
                }
            }
            Op::Softmax { a, axis } => {
                let y = &self.nodes[idx].value;
                let idx_sets = slice_indices(y.shape(), *axis);
                let yv = y.data().to_vec();
                if let Some(da) = self.acc(grads, *a) {
                    for set in idx_sets {
                        let dot: f64 = set.iter().map(|&i| g.data()[i] * yv[i]).sum();
                        for &i in &set {
                            da.data_mut()[i] += yv[i] * (g.data()[i] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { a, gain, bias } => {
                let x = self.value(*a);
                let width = *x.shape().last().unwrap();
                let slices = x.len() / width;
                let gd = self.value(*gain).data().to_vec();
                let xd = x.data().to_vec();
                // Per slice: xhat, sigma reconstructed from the input.
                let mut xhat = vec![0.0; xd.len()];
                let mut inv_sigma = vec![0.0; slices];
                for s in 0..slices {
                    let seg = &xd[s * width..(s + 1) * width];
                    let (mean, isg) = norm_stats(seg);
                    inv_sigma[s] = isg;
                    for j in 0..width {
                        xhat[s * width + j] = (seg[j] - mean) * isg;
                    }
                }
                if let Some(dgain) = self.acc(grads, *gain) {
                    for s in 0..slices {
                        for j in 0..width {
                            dgain.data_mut()[j] += g.data()[s * width + j] * xhat[s * width + j];
                        }
                    }
                }
                if let Some(dbias) = self.acc(grads, *bias) {
                    for s in 0..slices {
                        for j in 0..width {
                            dbias.data_mut()[j] += g.data()[s * width + j];
                        }
                    }
                }
                if let Some(da) = self.acc(grads, *a) {
                    for (s, is) in inv_sigma.iter().enumerate() {
                        let base = s * width;
                        let dxhat: Vec<f64> =
                            (0..width).map(|j| gd[j] * g.data()[base + j]).collect();
                        let m1: f64 = dxhat.iter().sum::<f64>() / width as f64;
                        let m2: f64 = dxhat
                            .iter()
                            .zip(&xhat[base..base + width])
                            .map(|(d, h)| d * h)
                            .sum::<f64>()
                            / width as f64;
                        for j in 0..width {
                            da.data_mut()[base + j] +=
                                (dxhat[j] - m1 - xhat[base + j] * m2) * is;
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let parts = parts.clone();
                let axis = *axis;
                if self.value(parts[0]).rank() == 1 || axis == 0 {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(p).len();
                        if let Some(dp) = self.acc(grads, p) {
                            add_assign(dp.data_mut(), &g.data()[offset..offset + len]);
                        }
                        offset += len;
                    }
                } else {
                    let rows = self.value(parts[0]).shape()[0];
                    let widths: Vec<usize> =
                        parts.iter().map(|p| self.value(*p).shape()[1]).collect();
                    let total: usize = widths.iter().sum();
                    let mut col0 = 0;
                    for (p, w) in parts.iter().zip(&widths) {
                        if let Some(dp) = self.acc(grads, *p) {
                            for i in 0..rows {
                                for j in 0..*w {
                                    dp.data_mut()[i * w + j] += g.data()[i * total + col0 + j];
                                }
                            }
                        }
                        col0 += w;
                    }
                }
            }
            Op::Stack { parts } => {
                let parts = parts.clone();
                let width = self.value(parts[0]).len();
                for (i, p) in parts.iter().enumerate() {
                    if let Some(dp) = self.acc(grads, *p) {
                        add_assign(dp.data_mut(), &g.data()[i * width..(i + 1) * width]);
                    }
                }
            }
            Op::Transpose { a } => {
                if let Some(da) = self.acc(grads, *a) {
                    let gt = transpose_values(g);
                    add_assign(da.data_mut(), gt.data());
                }
            }
            Op::MeanPool { a, axis } => {
                let (r, c) = self.value(*a).dims2().unwrap();
                let axis = *axis;
                if let Some(da) = self.acc(grads, *a) {
                    if axis == 0 {
                        for i in 0..r {
                            for j in 0..c {
                                da.data_mut()[i * c + j] += g.data()[j] / r as f64;
                            }
                        }
                    } else {
                        for i in 0..r {
                            for j in 0..c {
                                da.data_mut()[i * c + j] += g.data()[i] / c as f64;
                            }
                        }
                    }
                }
            }
            Op::MaxPool { a, axis, arg } => {
                let c = self.value(*a).shape()[1];
                let axis = *axis;
                let arg = arg.clone();
                if let Some(da) = self.acc(grads, *a) {
                    for (o, &src) in arg.iter().enumerate() {
                        let flat = if axis == 0 { src * c + o } else { o * c + src };
                        da.data_mut()[flat] += g.data()[o];
                    }
                }
            }
            Op::L2Normalize { a } => {
                let x = self.value(*a);
                let width = *x.shape().last().unwrap();
                let y = self.nodes[idx].value.data().to_vec();
                let xd = x.data().to_vec();
                if let Some(da) = self.acc(grads, *a) {
                    for s in 0..(xd.len() / width) {
                        let base = s * width;
                        let r = l2_radius(&xd[base..base + width]);
                        let dot: f64 = (0..width)
                            .map(|j| g.data()[base + j] * y[base + j])
                            .sum();
                        for j in 0..width {
                            da.data_mut()[base + j] +=
                                (g.data()[base + j] - dot * y[base + j]) / r;
                        }
                    }
                }
            }
            Op::Sum { a } => {
                let gv = g.data()[0];
                if let Some(da) = self.acc(grads, *a) {
                    for d in da.data_mut().iter_mut() {
                        *d += gv;
                    }
                }
            }
            Op::SelectRow { a, row } => {
                let c = self.value(*a).shape()[1];
                let row = *row;
                if let Some(da) = self.acc(grads, *a) {
                    add_assign(&mut da.data_mut()[row * c..(row + 1) * c], g.data());
                }
            }
        }
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn transpose_values(t: &Tensor) -> Tensor {
    let (r, _) = t.dims2().unwrap();
    Tensor::from_fn(&[t.shape()[1], r], |i| t.at(i % r, i / r))
}

fn check_axis(t: &Tensor, axis: usize, what: &str) -> Result<()> {
    let ok = match t.rank() {
        1 => axis == 0,
        2 => axis <= 1,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(SrxError::shape(format!("{what} axis {axis} on shape {:?}", t.shape())))
    }
}

fn last_axis_len(t: &Tensor) -> Result<usize> {
    match t.shape().last() {
        Some(&w) if t.rank() <= 2 => Ok(w),
        _ => Err(SrxError::shape(format!("need vector or matrix, got {:?}", t.shape()))),
    }
}

/// Flat index groups forming the 1-D slices along `axis`.
fn slice_indices(shape: &[usize], axis: usize) -> Vec<Vec<usize>> {
    match shape {
        [n] => vec![(0..*n).collect()],
        [r, c] => {
            if axis == 1 {
                (0..*r).map(|i| (i * c..(i + 1) * c).collect()).collect()
            } else {
                (0..*c).map(|j| (0..*r).map(|i| i * c + j).collect()).collect()
            }
        }
        _ => unreachable!("checked by check_axis"),
    }
}

fn softmax_slice(data: &mut [f64], idx: &[usize]) {
    let m = idx.iter().map(|&i| data[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for &i in idx {
        data[i] = (data[i] - m).exp();
        total += data[i];
    }
    for &i in idx {
        data[i] /= total;
    }
}

/// Mean and reciprocal standard deviation of one slice.
fn norm_stats(seg: &[f64]) -> (f64, f64) {
    let n = seg.len() as f64;
    let mean = seg.iter().sum::<f64>() / n;
    let var = seg.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

fn l2_radius(seg: &[f64]) -> f64 {
    (seg.iter().map(|x| x * x).sum::<f64>() + L2_NORM_EPS).sqrt()
}
