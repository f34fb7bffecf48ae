use std::cell::{Ref, RefCell};

use rand::Rng;

use super::kernels::{broadcast_map, broadcast_shape, mm_nn, mm_nt_acc, mm_tn_acc, permute_map};
use super::{numel, ParamStore, Real, Tensor};
use crate::error::{contract, Error, Result};

enum Op<T> {
    Leaf,
    Param(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    MatMul(usize, usize),
    Relu(usize),
    Softmax {
        x: usize,
        axis: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        rstd: Vec<f64>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Reshape(usize),
    Permute {
        x: usize,
        perm: Vec<usize>,
    },
    Dropout {
        x: usize,
        mask: Vec<T>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        ignore: usize,
        probs: Vec<T>,
        count: usize,
    },
    Sum(usize),
    Mean(usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation record for one forward pass.
pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Differentiable input.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input (masks, positional tables, features).
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    /// Records parameter `index` of `store` as a differentiable leaf.
    pub fn param(&self, store: &ParamStore<T>, index: usize) -> Var<'_, T> {
        self.push(store.params[index].value.clone(), Op::Param(index), true)
    }
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(usize, usize)>,
    visited: usize,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&[T]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Number of tape nodes the reverse sweep processed.
    pub fn visited(&self) -> usize {
        self.visited
    }

    /// Adds parameter gradients into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for &(node, index) in &self.params {
            if let Some(g) = &self.grads[node] {
                let dst = &mut store.params[index].grad;
                for (d, &v) in dst.iter_mut().zip(g) {
                    *d += v;
                }
            }
        }
    }
}

fn acc_to<T: Real>(slot: &mut Option<Vec<T>>, len: usize, f: impl FnOnce(&mut [T])) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    f(buf);
}

fn acc_f64<T: Real>(slot: &mut Option<Vec<T>>, src: &[f64]) {
    acc_to(slot, src.len(), |g| {
        for (d, &s) in g.iter_mut().zip(src) {
            *d += T::of(s);
        }
    });
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let len = shape[axis];
    let inner = numel(&shape[axis + 1..]);
    (outer, len, inner)
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    fn node(&self) -> Ref<'_, Node<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node().value.shape.clone()
    }

    pub fn value(&self) -> Tensor<T> {
        self.node().value.clone()
    }

    pub fn data(&self) -> Vec<T> {
        self.node().value.data.clone()
    }

    pub fn item(&self) -> T {
        self.node().value.data[0]
    }

    fn binary(self, rhs: Var<'t, T>, name: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Self> {
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
        let shape = broadcast_shape(&a.shape, &b.shape).ok_or_else(|| {
            Error::Contract(format!("{name}: cannot broadcast {:?} with {:?}", a.shape, b.shape))
        })?;
        let data: Vec<T> = if a.shape == b.shape {
            a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let ma = broadcast_map(&shape, &a.shape);
            let mb = broadcast_map(&shape, &b.shape);
            ma.iter()
                .zip(&mb)
                .map(|(&i, &j)| f(a.data[i], b.data[j]))
                .collect()
        };
        drop(nodes);
        let rg = self.tape.requires(&[self.id, rhs.id]);
        Ok(self.tape.push(Tensor { shape, data }, op, rg))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Var<'t, T>) -> Result<Self> {
        self.binary(rhs, "add", |x, y| x + y, Op::Add(self.id, rhs.id))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Var<'t, T>) -> Result<Self> {
        self.binary(rhs, "sub", |x, y| x - y, Op::Sub(self.id, rhs.id))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Var<'t, T>) -> Result<Self> {
        self.binary(rhs, "mul", |x, y| x * y, Op::Mul(self.id, rhs.id))
    }

    pub fn scale(self, c: T) -> Self {
        let v = {
            let n = self.node();
            Tensor {
                shape: n.value.shape.clone(),
                data: n.value.data.iter().map(|&x| x * c).collect(),
            }
        };
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(v, Op::Scale(self.id, c), rg)
    }

    /// Batched matrix product `[.., m, k] x [.., k, n] -> [.., m, n]` with
    /// broadcast batch extents.
    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Self> {
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
        contract!(
            a.rank() >= 2 && b.rank() >= 2,
            "matmul needs rank >= 2 operands, got {:?} and {:?}",
            a.shape,
            b.shape
        );
        let (ra, rb) = (a.rank(), b.rank());
        let (m, k, k2, n) = (a.shape[ra - 2], a.shape[ra - 1], b.shape[rb - 2], b.shape[rb - 1]);
        contract!(k == k2, "matmul inner extents differ: {:?} x {:?}", a.shape, b.shape);
        let batch = broadcast_shape(&a.shape[..ra - 2], &b.shape[..rb - 2]).ok_or_else(|| {
            Error::Contract(format!(
                "matmul batch extents not broadcastable: {:?} x {:?}",
                a.shape, b.shape
            ))
        })?;
        let mut shape = batch.clone();
        shape.extend([m, n]);
        let mut out = vec![T::zero(); numel(&shape)];
        if rb == 2 && numel(&batch) == numel(&a.shape[..ra - 2]) {
            mm_nn(&a.data, &b.data, numel(&batch) * m, k, n, &mut out);
        } else {
            let ma = broadcast_map(&batch, &a.shape[..ra - 2]);
            let mb = broadcast_map(&batch, &b.shape[..rb - 2]);
            for (bi, (&ia, &ib)) in ma.iter().zip(&mb).enumerate() {
                mm_nn(
                    &a.data[ia * m * k..(ia + 1) * m * k],
                    &b.data[ib * k * n..(ib + 1) * k * n],
                    m,
                    k,
                    n,
                    &mut out[bi * m * n..(bi + 1) * m * n],
                );
            }
        }
        drop(nodes);
        let rg = self.tape.requires(&[self.id, rhs.id]);
        Ok(self
            .tape
            .push(Tensor { shape, data: out }, Op::MatMul(self.id, rhs.id), rg))
    }

    pub fn relu(self) -> Self {
        let v = {
            let n = self.node();
            Tensor {
                shape: n.value.shape.clone(),
                data: n.value.data.iter().map(|&x| x.max(T::zero())).collect(),
            }
        };
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(v, Op::Relu(self.id), rg)
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Self> {
        let v = {
            let n = self.node();
            let x = &n.value;
            contract!(axis < x.rank(), "softmax axis {axis} out of range for {:?}", x.shape);
            let (outer, len, inner) = axis_split(&x.shape, axis);
            let mut out = vec![T::zero(); x.data.len()];
            let mut buf = vec![0.0f64; len];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let max = (0..len)
                        .map(|j| x.data[base + j * inner].f64())
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for (j, b) in buf.iter_mut().enumerate() {
                        *b = (x.data[base + j * inner].f64() - max).exp();
                        sum += *b;
                    }
                    for (j, b) in buf.iter().enumerate() {
                        out[base + j * inner] = T::of(b / sum);
                    }
                }
            }
            Tensor {
                shape: x.shape.clone(),
                data: out,
            }
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(v, Op::Softmax { x: self.id, axis }, rg))
    }

    /// Normalizes over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(self, gain: Var<'t, T>, bias: Var<'t, T>, eps: f64) -> Result<Self> {
        let (v, xhat, rstd) = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let (g, b) = (&nodes[gain.id].value, &nodes[bias.id].value);
            let d = *x.shape.last().ok_or_else(|| {
                Error::Contract("layer_norm needs rank >= 1".into())
            })?;
            contract!(
                g.data.len() == d && b.data.len() == d,
                "layer_norm gain/bias must have {d} entries, got {:?}/{:?}",
                g.shape,
                b.shape
            );
            let rows = x.data.len() / d.max(1);
            let mut out = vec![T::zero(); x.data.len()];
            let mut xhat = vec![T::zero(); x.data.len()];
            let mut rstd = vec![0.0; rows];
            for r in 0..rows {
                let row = &x.data[r * d..(r + 1) * d];
                let mean = row.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / d as f64;
                let rs = 1.0 / (var + eps).sqrt();
                rstd[r] = rs;
                for j in 0..d {
                    let h = (row[j].f64() - mean) * rs;
                    xhat[r * d + j] = T::of(h);
                    out[r * d + j] = T::of(h * g.data[j].f64() + b.data[j].f64());
                }
            }
            (
                Tensor {
                    shape: x.shape.clone(),
                    data: out,
                },
                xhat,
                rstd,
            )
        };
        let rg = self.tape.requires(&[self.id, gain.id, bias.id]);
        Ok(self.tape.push(
            v,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Gathers rows of a `[vocab, d]` table; output is `[ids.len(), d]`.
    pub fn embedding(self, ids: &[usize]) -> Result<Self> {
        let v = {
            let n = self.node();
            let t = &n.value;
            contract!(t.rank() == 2, "embedding table must be rank 2, got {:?}", t.shape);
            let (vocab, d) = (t.shape[0], t.shape[1]);
            let mut data = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                contract!(id < vocab, "token id {id} outside vocabulary of {vocab}");
                data.extend_from_slice(&t.data[id * d..(id + 1) * d]);
            }
            Tensor {
                shape: vec![ids.len(), d],
                data,
            }
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(
            v,
            Op::Embedding {
                table: self.id,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let v = {
            let n = self.node();
            contract!(
                numel(shape) == n.value.data.len(),
                "cannot reshape {:?} to {shape:?}",
                n.value.shape
            );
            Tensor {
                shape: shape.to_vec(),
                data: n.value.data.clone(),
            }
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(v, Op::Reshape(self.id), rg))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(self, perm: &[usize]) -> Result<Self> {
        let v = {
            let n = self.node();
            let x = &n.value;
            let mut seen = vec![false; x.rank()];
            contract!(perm.len() == x.rank(), "permutation {perm:?} does not match {:?}", x.shape);
            for &p in perm {
                contract!(p < x.rank() && !seen[p], "invalid permutation {perm:?}");
                seen[p] = true;
            }
            let map = permute_map(&x.shape, perm);
            Tensor {
                shape: perm.iter().map(|&p| x.shape[p]).collect(),
                data: map.iter().map(|&i| x.data[i]).collect(),
            }
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(
            v,
            Op::Permute {
                x: self.id,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(self, p: f64, rng: &mut R) -> Self {
        if p <= 0.0 {
            return self;
        }
        let keep = 1.0 - p;
        let (v, mask) = {
            let n = self.node();
            let mask: Vec<T> = (0..n.value.data.len())
                .map(|_| {
                    if rng.gen::<f64>() < keep {
                        T::of(1.0 / keep)
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let data = n.value.data.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
            (
                Tensor {
                    shape: n.value.shape.clone(),
                    data,
                },
                mask,
            )
        };
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(v, Op::Dropout { x: self.id, mask }, rg)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `[N, V]` logits, skipping rows whose target equals `ignore`.
    pub fn cross_entropy(self, targets: &[usize], ignore: usize) -> Result<Self> {
        let (loss, probs, count) = {
            let n = self.node();
            let x = &n.value;
            contract!(x.rank() == 2, "cross_entropy expects [N, V] logits, got {:?}", x.shape);
            let (rows, vocab) = (x.shape[0], x.shape[1]);
            contract!(
                targets.len() == rows,
                "{} targets for {rows} logit rows",
                targets.len()
            );
            let mut probs = vec![T::zero(); x.data.len()];
            let mut total = 0.0;
            let mut count = 0;
            for r in 0..rows {
                let row = &x.data[r * vocab..(r + 1) * vocab];
                let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|v| (v.f64() - max).exp()).sum();
                let log_z = max + sum.ln();
                for (p, v) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                    *p = T::of((v.f64() - log_z).exp());
                }
                let t = targets[r];
                if t == ignore {
                    continue;
                }
                contract!(t < vocab, "target {t} outside vocabulary of {vocab}");
                total += log_z - row[t].f64();
                count += 1;
            }
            contract!(count > 0, "every target position is padding");
            (total / count as f64, probs, count)
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(
            Tensor::scalar(T::of(loss)),
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.to_vec(),
                ignore,
                probs,
                count,
            },
            rg,
        ))
    }

    pub fn sum(self) -> Self {
        let s = self.node().value.data.iter().map(|v| v.f64()).sum::<f64>();
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(Tensor::scalar(T::of(s)), Op::Sum(self.id), rg)
    }

    pub fn mean(self) -> Self {
        let (s, n) = {
            let node = self.node();
            let d = &node.value.data;
            (d.iter().map(|v| v.f64()).sum::<f64>(), d.len().max(1))
        };
        let rg = self.tape.requires(&[self.id]);
        self.tape
            .push(Tensor::scalar(T::of(s / n as f64)), Op::Mean(self.id), rg)
    }

    /// Reverse sweep from this scalar over every earlier tape node.
    pub fn backward(self) -> Result<Gradients<T>> {
        let nodes = self.tape.nodes.borrow();
        contract!(
            nodes[self.id].value.data.len() == 1,
            "backward needs a scalar, got {:?}",
            nodes[self.id].value.shape
        );
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[self.id] = Some(vec![T::one()]);
        let mut params = Vec::new();
        let mut visited = 0;
        for id in (0..=self.id).rev() {
            visited += 1;
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            backward_node(&nodes, id, &g, &mut grads, &mut params);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            params,
            visited,
        })
    }
}

fn reduce_broadcast<T: Real>(g: &[T], out_shape: &[usize], src_shape: &[usize], f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut acc = vec![0.0; numel(src_shape)];
    if out_shape == src_shape {
        for (i, a) in acc.iter_mut().enumerate() {
            *a = g[i].f64() * f(i);
        }
    } else {
        let map = broadcast_map(out_shape, src_shape);
        for (i, &j) in map.iter().enumerate() {
            acc[j] += g[i].f64() * f(i);
        }
    }
    acc
}

fn backward_node<T: Real>(
    nodes: &[Node<T>],
    id: usize,
    g: &[T],
    grads: &mut [Option<Vec<T>>],
    params: &mut Vec<(usize, usize)>,
) {
    let node = &nodes[id];
    let out_shape = &node.value.shape;
    match &node.op {
        Op::Leaf => {}
        Op::Param(index) => params.push((id, *index)),
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            for (src, s) in [(*a, 1.0), (*b, sign)] {
                if nodes[src].requires_grad {
                    let acc = reduce_broadcast(g, out_shape, &nodes[src].value.shape, |_| s);
                    acc_f64(&mut grads[src], &acc);
                }
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            if nodes[*a].requires_grad {
                let mb = broadcast_map(out_shape, &vb.shape);
                let acc = reduce_broadcast(g, out_shape, &va.shape, |i| vb.data[mb[i]].f64());
                acc_f64(&mut grads[*a], &acc);
            }
            if nodes[*b].requires_grad {
                let ma = broadcast_map(out_shape, &va.shape);
                let acc = reduce_broadcast(g, out_shape, &vb.shape, |i| va.data[ma[i]].f64());
                acc_f64(&mut grads[*b], &acc);
            }
        }
        Op::Scale(x, c) => {
            let len = g.len();
            acc_to(&mut grads[*x], len, |dst| {
                for (d, &v) in dst.iter_mut().zip(g) {
                    *d += v * *c;
                }
            });
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            let (ra, rb) = (va.rank(), vb.rank());
            let (m, k, n) = (va.shape[ra - 2], va.shape[ra - 1], vb.shape[rb - 1]);
            let batch = &out_shape[..out_shape.len() - 2];
            let mut ga = nodes[*a].requires_grad.then(|| vec![0.0; va.data.len()]);
            let mut gb = nodes[*b].requires_grad.then(|| vec![0.0; vb.data.len()]);
            if rb == 2 && numel(batch) == numel(&va.shape[..ra - 2]) {
                let rows = numel(batch) * m;
                if let Some(ga) = ga.as_mut() {
                    mm_nt_acc(g, &vb.data, rows, k, n, ga);
                }
                if let Some(gb) = gb.as_mut() {
                    mm_tn_acc(&va.data, g, rows, k, n, gb);
                }
            } else {
                let ma = broadcast_map(batch, &va.shape[..ra - 2]);
                let mb = broadcast_map(batch, &vb.shape[..rb - 2]);
                for (bi, (&ia, &ib)) in ma.iter().zip(&mb).enumerate() {
                    let gblk = &g[bi * m * n..(bi + 1) * m * n];
                    if let Some(ga) = ga.as_mut() {
                        mm_nt_acc(
                            gblk,
                            &vb.data[ib * k * n..(ib + 1) * k * n],
                            m,
                            k,
                            n,
                            &mut ga[ia * m * k..(ia + 1) * m * k],
                        );
                    }
                    if let Some(gb) = gb.as_mut() {
                        mm_tn_acc(
                            &va.data[ia * m * k..(ia + 1) * m * k],
                            gblk,
                            m,
                            k,
                            n,
                            &mut gb[ib * k * n..(ib + 1) * k * n],
                        );
                    }
                }
            }
            if let Some(ga) = ga {
                acc_f64(&mut grads[*a], &ga);
            }
            if let Some(gb) = gb {
                acc_f64(&mut grads[*b], &gb);
            }
        }
        Op::Relu(x) => {
            let xv = &nodes[*x].value.data;
            acc_to(&mut grads[*x], g.len(), |dst| {
                for ((d, &gv), &v) in dst.iter_mut().zip(g).zip(xv) {
                    if v > T::zero() {
                        *d += gv;
                    }
                }
            });
        }
        Op::Softmax { x, axis } => {
            let y = &node.value.data;
            let (outer, len, inner) = axis_split(out_shape, *axis);
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let dot: f64 = (0..len)
                        .map(|j| g[base + j * inner].f64() * y[base + j * inner].f64())
                        .sum();
                    for j in 0..len {
                        let at = base + j * inner;
                        gx[at] = y[at].f64() * (g[at].f64() - dot);
                    }
                }
            }
            acc_f64(&mut grads[*x], &gx);
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        } => {
            let d = *out_shape.last().unwrap();
            let rows = xhat.len() / d.max(1);
            let gv = &nodes[*gain].value.data;
            if nodes[*x].requires_grad {
                let mut gx = vec![0.0; xhat.len()];
                for r in 0..rows {
                    let mut mean_g = 0.0;
                    let mut mean_gx = 0.0;
                    for j in 0..d {
                        let gh = g[r * d + j].f64() * gv[j].f64();
                        mean_g += gh;
                        mean_gx += gh * xhat[r * d + j].f64();
                    }
                    mean_g /= d as f64;
                    mean_gx /= d as f64;
                    for j in 0..d {
                        let gh = g[r * d + j].f64() * gv[j].f64();
                        gx[r * d + j] = rstd[r] * (gh - mean_g - xhat[r * d + j].f64() * mean_gx);
                    }
                }
                acc_f64(&mut grads[*x], &gx);
            }
            if nodes[*gain].requires_grad {
                let mut gg = vec![0.0; d];
                for r in 0..rows {
                    for j in 0..d {
                        gg[j] += g[r * d + j].f64() * xhat[r * d + j].f64();
                    }
                }
                acc_f64(&mut grads[*gain], &gg);
            }
            if nodes[*bias].requires_grad {
                let mut gb = vec![0.0; d];
                for r in 0..rows {
                    for j in 0..d {
                        gb[j] += g[r * d + j].f64();
                    }
                }
                acc_f64(&mut grads[*bias], &gb);
            }
        }
        Op::Embedding { table, ids } => {
            let tv = &nodes[*table].value;
            let d = tv.shape[1];
            let mut gt = vec![0.0; tv.data.len()];
            for (r, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    gt[id * d + j] += g[r * d + j].f64();
                }
            }
            acc_f64(&mut grads[*table], &gt);
        }
        Op::Reshape(x) => {
            acc_to(&mut grads[*x], g.len(), |dst| {
                for (d, &v) in dst.iter_mut().zip(g) {
                    *d += v;
                }
            });
        }
        Op::Permute { x, perm } => {
            let map = permute_map(&nodes[*x].value.shape, perm);
            acc_to(&mut grads[*x], g.len(), |dst| {
                for (i, &src) in map.iter().enumerate() {
                    dst[src] += g[i];
                }
            });
        }
        Op::Dropout { x, mask } => {
            acc_to(&mut grads[*x], g.len(), |dst| {
                for ((d, &v), &m) in dst.iter_mut().zip(g).zip(mask) {
                    *d += v * m;
                }
            });
        }
        Op::CrossEntropy {
            logits,
            targets,
            ignore,
            probs,
            count,
        } => {
            let vocab = nodes[*logits].value.shape[1];
            let upstream = g[0].f64() / *count as f64;
            let mut gl = vec![0.0; probs.len()];
            for (r, &t) in targets.iter().enumerate() {
                if t == *ignore {
                    continue;
                }
                for j in 0..vocab {
                    let onehot = if j == t { 1.0 } else { 0.0 };
                    gl[r * vocab + j] = upstream * (probs[r * vocab + j].f64() - onehot);
                }
            }
            acc_f64(&mut grads[*logits], &gl);
        }
        Op::Sum(x) | Op::Mean(x) => {
            let len = nodes[*x].value.data.len();
            let scale = if matches!(node.op, Op::Mean(_)) {
                1.0 / len.max(1) as f64
            } else {
                1.0
            };
            let v = T::of(g[0].f64() * scale);
            acc_to(&mut grads[*x], len, |dst| dst.iter_mut().for_each(|d| *d += v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let tape = Tape::new();
        let a = tape.var(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.var(t(&[2, 1], &[5., 6.]));
        let c = a.matmul(b).unwrap();
        assert_eq!(c.shape(), vec![2, 1]);
        assert_eq!(c.data(), vec![17., 39.]);
    }

    #[test]
    fn matmul_identity() {
        let tape = Tape::new();
        let a = tape.var(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let i = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        assert_eq!(a.matmul(i).unwrap().data(), a.data());
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let tape = Tape::new();
        let a = tape.var(Tensor::<f64>::zeros(&[2, 3]));
        let b = tape.var(Tensor::<f64>::zeros(&[4, 2]));
        let err = a.matmul(b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let tape = Tape::new();
        let u = tape.var(t(&[1, 4], &[3., 3., 3., 3.])).softmax(1).unwrap();
        assert!(u.data().iter().all(|&p| (p - 0.25).abs() < 1e-12));
        let s = tape.var(t(&[1, 2], &[1000., 0.])).softmax(1).unwrap().data();
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] < 1e-300 && s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn layer_norm_statistics() {
        let tape = Tape::new();
        let x = tape.var(t(&[2, 4], &[1., 2., 3., 10., 5., 5., 5., 5.]));
        let g = tape.constant(Tensor::full(&[4], 1.0));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = x.layer_norm(g, b, 1e-5).unwrap().data();
        let row0 = &y[..4];
        let mean: f64 = row0.iter().sum::<f64>() / 4.0;
        let var: f64 = row0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-3);
        assert!(y[4..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cross_entropy_values() {
        let tape = Tape::new();
        let uniform = tape.var(Tensor::<f64>::zeros(&[2, 93]));
        let l = uniform.cross_entropy(&[5, 0], 0).unwrap().item();
        assert!((l - 93f64.ln()).abs() < 1e-12);
        let mut sharp = vec![0.0; 10];
        sharp[3] = 100.0;
        let l = tape.var(t(&[1, 10], &sharp)).cross_entropy(&[3], 0).unwrap().item();
        assert!(l.abs() < 1e-6);
        let err = tape.var(Tensor::<f64>::zeros(&[2, 4])).cross_entropy(&[0, 0], 0);
        assert!(err.is_err());
    }

    #[test]
    fn backward_visits_each_node_once() {
        let tape = Tape::new();
        let x = tape.var(t(&[3], &[1., 2., 3.]));
        let y = x.mul(x).unwrap();
        let z = y.scale(2.0).add(x).unwrap();
        let loss = z.sum();
        let grads = loss.backward().unwrap();
        assert_eq!(grads.visited(), tape.len());
        // d/dx (2x^2 + x) = 4x + 1
        assert_eq!(grads.wrt(x).unwrap(), &[5., 9., 13.]);
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let tape = Tape::new();
        let x = tape.var(Tensor::<f64>::zeros(&[2, 3]));
        let b = tape.var(t(&[3], &[1., 2., 3.]));
        let grads = x.add(b).unwrap().sum().backward().unwrap();
        assert_eq!(grads.wrt(b).unwrap(), &[2., 2., 2.]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let x = tape.var(t(&[2], &[1., 2.]));
        let c = tape.constant(t(&[2], &[3., 4.]));
        let grads = x.mul(c).unwrap().sum().backward().unwrap();
        assert!(grads.wrt(c).is_none());
        assert_eq!(grads.wrt(x).unwrap(), &[3., 4.]);
    }
}
