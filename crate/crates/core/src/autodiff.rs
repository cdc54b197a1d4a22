//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a `1 x 1` node walks the record in reverse and
//! returns the gradient of that scalar with respect to every node. The op set
//! is the one the imputation models need, including fused multi-head and
//! graph attention kernels.

use std::rc::Rc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::error::{input, Error, Result};
use crate::params::ParamStore;
use crate::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    OneMinus(Var),
    LeakyRelu(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    MaskMul(Var, Array2<T>),
    Normalize(Var, T),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Rc<Vec<usize>>),
    Reshape(Var),
    Transpose(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        groups: usize,
        heads: usize,
        probs: Vec<Array2<T>>,
    },
    GraphAttention {
        h: Var,
        src: Var,
        dst: Var,
        groups: usize,
        slope: T,
        probs: Vec<Array2<T>>,
    },
    MaskedMse {
        pred: Var,
        target: Array2<T>,
        weight: Array2<T>,
        count: usize,
    },
    Sum(Var),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Row-wise softmax in place, restricted to entries where `allowed` is true.
/// Disallowed entries become exactly zero.
fn softmax_rows_masked<T: Scalar>(scores: &mut Array2<T>, allowed: Option<&[bool]>) {
    let cols = scores.ncols();
    for (i, mut row) in scores.outer_iter_mut().enumerate() {
        let ok = |j: usize| allowed.is_none_or(|a| a[i * cols + j]);
        let mut max = T::neg_infinity();
        for (j, &x) in row.iter().enumerate() {
            if ok(j) && x > max {
                max = x;
            }
        }
        let mut total = T::zero();
        for (j, x) in row.iter_mut().enumerate() {
            if ok(j) {
                *x = (*x - max).exp();
                total += *x;
            } else {
                *x = T::zero();
            }
        }
        if total > T::zero() {
            row.mapv_inplace(|x| x / total);
        }
    }
}

pub(crate) fn softmax_rows<T: Scalar>(scores: &mut Array2<T>) {
    softmax_rows_masked(scores, None)
}

/// Backward of a row softmax: `dS = P * (dP - rowsum(dP * P))`.
fn softmax_rows_backward<T: Scalar>(probs: &Array2<T>, dprobs: &Array2<T>) -> Array2<T> {
    let mut out = dprobs * probs;
    for (mut row, p) in out.outer_iter_mut().zip(probs.outer_iter()) {
        let dot: T = row.iter().copied().sum();
        row.zip_mut_with(&p, |x, &pi| *x -= pi * dot);
    }
    out
}

fn leaky<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    /// Constant input; gradients flow into it but nothing consumes them.
    pub fn input(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf bound to parameter slot `slot`.
    pub fn param(&mut self, slot: usize, value: Array2<T>) -> Var {
        self.push(value, Op::Param(slot))
    }

    /// Registers every parameter of `store` and returns their vars by slot.
    pub fn params(&mut self, store: &ParamStore<T>) -> Vec<Var> {
        (0..store.len())
            .map(|slot| self.param(slot, store.get(slot).clone()))
            .collect()
    }

    /// Attention probabilities cached by an attention node, one matrix per
    /// (group, head) or per group for graph attention.
    /// Probability tables of every attention node recorded so far, in tape order.
    pub fn all_attention_probs(&self) -> impl Iterator<Item = &[Array2<T>]> + '_ {
        (0..self.nodes.len()).filter_map(|i| self.attention_probs(Var(i)))
    }

    pub fn attention_probs(&self, v: Var) -> Option<&[Array2<T>]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } | Op::GraphAttention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a + row` where `row` is `1 x cols`, broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| T::one() - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = self.value(a).mapv(|x| leaky(x, slope));
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(T::zero()));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| T::one() / (T::one() + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(T::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Elementwise product with a constant matrix (dropout masks, selectors).
    pub fn mask_mul(&mut self, a: Var, mask: Array2<T>) -> Var {
        let v = self.value(a) * &mask;
        self.push(v, Op::MaskMul(a, mask))
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)` with the
    /// population variance.
    pub fn normalize_rows(&mut self, a: Var, eps: T) -> Var {
        let v = normalize_rows(self.value(a).view(), eps);
        self.push(v, Op::Normalize(a, eps))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<T>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("matching column counts");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<T>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("matching row counts");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Output row `r` is input row `rows[r]`.
    pub fn gather_rows(&mut self, a: Var, rows: Rc<Vec<usize>>) -> Var {
        let v = self.value(a).select(Axis(0), &rows);
        self.push(v, Op::GatherRows(a, rows))
    }

    /// Row-major reshape to `rows x cols`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let src = self.value(a);
        if src.len() != rows * cols {
            return input(format!("cannot reshape {:?} into {rows}x{cols}", src.dim()));
        }
        let v = Array2::from_shape_vec((rows, cols), src.iter().copied().collect()).expect("length checked");
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().as_standard_layout().into_owned();
        self.push(v, Op::Transpose(a))
    }

    /// Block-diagonal multi-head scaled dot-product attention.
    ///
    /// `q`, `k` and `v` are stacked `groups` blocks of equal length; each
    /// block attends only within itself. Columns are split evenly into
    /// `heads` heads whose outputs are concatenated back in column order.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, groups: usize, heads: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, width) = qv.dim();
        if kv.dim() != (rows, width) || vv.dim() != (rows, width) {
            return input("attention operands must share one shape");
        }
        if groups == 0 || rows % groups != 0 || heads == 0 || width % heads != 0 {
            return input(format!(
                "cannot split {rows}x{width} into {groups} groups and {heads} heads"
            ));
        }
        let len = rows / groups;
        let dk = width / heads;
        let scale = T::one() / T::of_usize(dk).sqrt();
        let mut out = Array2::<T>::zeros((rows, width));
        let mut probs = Vec::with_capacity(groups * heads);
        for g in 0..groups {
            for h in 0..heads {
                let (r, c) = (g * len..(g + 1) * len, h * dk..(h + 1) * dk);
                let qs = qv.slice(s![r.clone(), c.clone()]);
                let ks = kv.slice(s![r.clone(), c.clone()]);
                let vs = vv.slice(s![r.clone(), c.clone()]);
                let mut p = qs.dot(&ks.t()) * scale;
                softmax_rows(&mut p);
                out.slice_mut(s![r, c]).assign(&p.dot(&vs));
                probs.push(p);
            }
        }
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                groups,
                heads,
                probs,
            },
        ))
    }

    /// Neighbourhood attention over `groups` stacked copies of one graph.
    ///
    /// `h` is `(groups * N) x d`, `src` and `dst` are the `(groups * N) x 1`
    /// halves of the attention logit. Node `i` of a group aggregates
    /// `sum_j alpha_ij h_j` over `adjacency[i * N + j]`, with
    /// `alpha_i. = softmax_j LeakyReLU(src_i + dst_j)`.
    pub fn graph_attention(
        &mut self,
        h: Var,
        src: Var,
        dst: Var,
        adjacency: &[bool],
        groups: usize,
        slope: T,
    ) -> Result<Var> {
        let (hv, sv, dv) = (self.value(h), self.value(src), self.value(dst));
        let rows = hv.nrows();
        if groups == 0 || rows % groups != 0 {
            return input(format!("cannot split {rows} rows into {groups} groups"));
        }
        let n = rows / groups;
        if adjacency.len() != n * n {
            return input(format!("adjacency has {} entries, expected {}", adjacency.len(), n * n));
        }
        if sv.dim() != (rows, 1) || dv.dim() != (rows, 1) {
            return input("attention logits must be column vectors matching the features");
        }
        if let Some(i) = (0..n).find(|&i| !adjacency[i * n..(i + 1) * n].iter().any(|&a| a)) {
            return Err(Error::Structure(format!("node {i} has no neighbours")));
        }
        let mut out = Array2::<T>::zeros(hv.dim());
        let mut probs = Vec::with_capacity(groups);
        for g in 0..groups {
            let base = g * n;
            let mut p = Array2::from_shape_fn((n, n), |(i, j)| {
                leaky(sv[(base + i, 0)] + dv[(base + j, 0)], slope)
            });
            softmax_rows_masked(&mut p, Some(adjacency));
            let hs = hv.slice(s![base..base + n, ..]);
            out.slice_mut(s![base..base + n, ..]).assign(&p.dot(&hs));
            probs.push(p);
        }
        Ok(self.push(
            out,
            Op::GraphAttention {
                h,
                src,
                dst,
                groups,
                slope,
                probs,
            },
        ))
    }

    /// Mean of `(pred - target)^2` over entries where `missing` is true.
    pub fn masked_mse(&mut self, pred: Var, target: &Array2<T>, missing: &Array2<bool>) -> Result<Var> {
        let pv = self.value(pred);
        if pv.dim() != target.dim() || pv.dim() != missing.dim() {
            return input("prediction, target and mask shapes differ");
        }
        let count = missing.iter().filter(|&&m| m).count();
        if count == 0 {
            return input("loss needs at least one missing entry");
        }
        let weight = missing.mapv(|m| if m { T::one() } else { T::zero() });
        let mut total = T::zero();
        for ((&p, &t), &w) in pv.iter().zip(target).zip(&weight) {
            total += w * (p - t) * (p - t);
        }
        let loss = Array2::from_elem((1, 1), total / T::of_usize(count));
        Ok(self.push(
            loss,
            Op::MaskedMse {
                pred,
                target: target.clone(),
                weight,
                count,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).dim(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::from_elem((1, 1), T::one()));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, delta: Array2<T>| match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            };
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    acc(*a, g.dot(&self.value(*b).t()));
                    acc(*b, self.value(*a).t().dot(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.mapv(|x| -x));
                }
                Op::Mul(a, b) => {
                    acc(*a, &g * self.value(*b));
                    acc(*b, &g * self.value(*a));
                }
                Op::AddRow(a, r) => {
                    acc(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(*a, g.clone());
                }
                Op::MulRow(a, r) => {
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(*a, &g * self.value(*r));
                    acc(*r, gr);
                }
                Op::Scale(a, s) => acc(*a, &g * *s),
                Op::OneMinus(a) => acc(*a, g.mapv(|x| -x)),
                Op::LeakyRelu(a, slope) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*a), |x, &inp| {
                        if inp <= T::zero() {
                            *x *= *slope
                        }
                    });
                    acc(*a, d);
                }
                Op::Relu(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*a), |x, &inp| {
                        if inp <= T::zero() {
                            *x = T::zero()
                        }
                    });
                    acc(*a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&node.value, |x, &y| *x *= y * (T::one() - y));
                    acc(*a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&node.value, |x, &y| *x *= T::one() - y * y);
                    acc(*a, d);
                }
                Op::MaskMul(a, mask) => acc(*a, &g * mask),
                Op::Normalize(a, eps) => acc(*a, normalize_rows_backward(self.value(*a), &node.value, &g, *eps)),
                Op::SliceRows(a, start) => {
                    let mut d = Array2::zeros(self.value(*a).dim());
                    d.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(*a, d);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Array2::zeros(self.value(*a).dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(*a, d);
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let r = self.value(p).nrows();
                        acc(p, g.slice(s![at..at + r, ..]).to_owned());
                        at += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let c = self.value(p).ncols();
                        acc(p, g.slice(s![.., at..at + c]).to_owned());
                        at += c;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let mut d = Array2::zeros(self.value(*a).dim());
                    for (r, &src) in rows.iter().enumerate() {
                        let mut target = d.row_mut(src);
                        target += &g.row(r);
                    }
                    acc(*a, d);
                }
                Op::Reshape(a) => {
                        let dim = self.value(*a).dim();
                        let d = Array2::from_shape_vec(dim, g.iter().copied().collect()).expect("same length");
                        acc(*a, d);
                }
                Op::Transpose(a) => acc(*a, g.t().as_standard_layout().into_owned()),
                Op::Attention {
                    q,
                    k,
                    v,
                    groups,
                    heads,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (rows, width) = qv.dim();
                    let len = rows / groups;
                    let dk = width / heads;
                    let scale = T::one() / T::of_usize(dk).sqrt();
                    let mut dq = Array2::zeros((rows, width));
                    let mut dkm = Array2::zeros((rows, width));
                    let mut dv = Array2::zeros((rows, width));
                    for gi in 0..*groups {
                        for h in 0..*heads {
                            let p = &probs[gi * heads + h];
                            let (r, c) = (gi * len..(gi + 1) * len, h * dk..(h + 1) * dk);
                            let go = g.slice(s![r.clone(), c.clone()]);
                            let qs = qv.slice(s![r.clone(), c.clone()]);
                            let ks = kv.slice(s![r.clone(), c.clone()]);
                            let vs = vv.slice(s![r.clone(), c.clone()]);
                            dv.slice_mut(s![r.clone(), c.clone()]).assign(&p.t().dot(&go));
                            let dp = go.dot(&vs.t());
                            let ds = softmax_rows_backward(p, &dp) * scale;
                            dq.slice_mut(s![r.clone(), c.clone()]).assign(&ds.dot(&ks));
                            dkm.slice_mut(s![r, c]).assign(&ds.t().dot(&qs));
                        }
                    }
                    acc(*q, dq);
                    acc(*k, dkm);
                    acc(*v, dv);
                }
                Op::GraphAttention {
                    h,
                    src,
                    dst,
                    groups,
                    slope,
                    probs,
                } => {
                    let (hv, sv, dvv) = (self.value(*h), self.value(*src), self.value(*dst));
                    let n = hv.nrows() / groups;
                    let mut dh = Array2::zeros(hv.dim());
                    let mut dsrc = Array2::zeros(sv.dim());
                    let mut ddst = Array2::zeros(dvv.dim());
                    for gi in 0..*groups {
                        let base = gi * n;
                        let p = &probs[gi];
                        let go = g.slice(s![base..base + n, ..]);
                        let hs = hv.slice(s![base..base + n, ..]);
                        dh.slice_mut(s![base..base + n, ..]).assign(&p.t().dot(&go));
                        let dp = go.dot(&hs.t());
                        let de = softmax_rows_backward(p, &dp);
                        for i in 0..n {
                            for j in 0..n {
                                if p[(i, j)] == T::zero() && de[(i, j)] == T::zero() {
                                    continue;
                                }
                                let pre = sv[(base + i, 0)] + dvv[(base + j, 0)];
                                let d = if pre > T::zero() {
                                    de[(i, j)]
                                } else {
                                    de[(i, j)] * *slope
                                };
                                dsrc[(base + i, 0)] += d;
                                ddst[(base + j, 0)] += d;
                            }
                        }
                    }
                    acc(*h, dh);
                    acc(*src, dsrc);
                    acc(*dst, ddst);
                }
                Op::MaskedMse {
                    pred,
                    target,
                    weight,
                    count,
                } => {
                    let coef = g[(0, 0)] * T::of(2.0) / T::of_usize(*count);
                    let mut d = self.value(*pred) - target;
                    d.zip_mut_with(weight, |x, &w| *x *= w * coef);
                    acc(*pred, d);
                }
                Op::Sum(a) => {
                    let gv = g[(0, 0)];
                    acc(*a, Array2::from_elem(self.value(*a).dim(), gv));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    /// Sums gradients of every parameter leaf into per-slot arrays shaped
    /// like `store`. Slots never touched receive zeros.
    pub fn param_grads(&self, grads: &Gradients<T>, store: &ParamStore<T>) -> Vec<Array2<T>> {
        let mut out: Vec<Array2<T>> = (0..store.len())
            .map(|slot| Array2::zeros(store.get(slot).dim()))
            .collect();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(slot), Some(g)) = (&node.op, &grads.grads[idx]) {
                out[*slot] += g;
            }
        }
        out
    }
}

pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

pub(crate) fn normalize_rows<T: Scalar>(x: ArrayView2<T>, eps: T) -> Array2<T> {
    let d = T::of_usize(x.ncols());
    let mut out = x.to_owned();
    for mut row in out.outer_iter_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
        let inv = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

fn normalize_rows_backward<T: Scalar>(x: &Array2<T>, y: &Array2<T>, g: &Array2<T>, eps: T) -> Array2<T> {
    let d = T::of_usize(x.ncols());
    let mut out = Array2::zeros(x.dim());
    for ((mut o, xr), (yr, gr)) in out
        .outer_iter_mut()
        .zip(x.outer_iter())
        .zip(y.outer_iter().zip(g.outer_iter()))
    {
        let mean = xr.sum() / d;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
        let inv = T::one() / (var + eps).sqrt();
        let g_mean = gr.sum() / d;
        let gy_mean = gr.iter().zip(yr.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
        for ((o, &gi), &yi) in o.iter_mut().zip(gr.iter()).zip(yr.iter()) {
            *o = inv * (gi - g_mean - yi * gy_mean);
        }
    }
    out
}
