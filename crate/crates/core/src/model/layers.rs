use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};
use crate::tensor::{Real, Tensor, Var};

/// Additive mask value for blocked attention scores. Finite so that masked
/// rows never produce NaN; `exp` of it underflows to exactly zero.
pub const MASKED: f64 = -1e9;

/// Dropout source for a forward pass; `None` means evaluation mode.
pub struct ForwardCtx {
    pub dropout: f64,
    pub rng: Option<ChaCha8Rng>,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            dropout: 0.0,
            rng: None,
        }
    }

    pub fn train(dropout: f64, rng: ChaCha8Rng) -> Self {
        Self {
            dropout,
            rng: Some(rng),
        }
    }

    pub fn dropout<'t, T: Real>(&mut self, x: Var<'t, T>) -> Var<'t, T> {
        match self.rng.as_mut() {
            Some(rng) if self.dropout > 0.0 => x.dropout(self.dropout, rng),
            _ => x,
        }
    }
}

#[derive(Clone, Copy)]
pub struct LinearVars<'t, T: Real> {
    pub weight: Var<'t, T>,
    pub bias: Var<'t, T>,
}

impl<'t, T: Real> LinearVars<'t, T> {
    /// `x[.., in] · W[in, out] + b[out]`
    pub fn apply(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.matmul(self.weight)?.add(self.bias)
    }
}

#[derive(Clone, Copy)]
pub struct AttentionVars<'t, T: Real> {
    pub q: LinearVars<'t, T>,
    pub k: LinearVars<'t, T>,
    pub v: LinearVars<'t, T>,
    pub o: LinearVars<'t, T>,
    pub n_heads: usize,
}

/// Scaled dot-product attention over the last two axes:
/// `softmax(Q Kᵀ / sqrt(d_k) + mask) V`.
pub fn attention<'t, T: Real>(
    q: Var<'t, T>,
    k: Var<'t, T>,
    v: Var<'t, T>,
    mask: Option<Var<'t, T>>,
    ctx: &mut ForwardCtx,
) -> Result<Var<'t, T>> {
    let (qs, ks, vs) = (q.shape(), k.shape(), v.shape());
    contract!(
        qs.len() >= 2 && qs.len() == ks.len() && ks.len() == vs.len(),
        "attention operands must share rank >= 2: {qs:?} {ks:?} {vs:?}"
    );
    let r = qs.len();
    contract!(
        qs[r - 1] == ks[r - 1],
        "query/key head dimensions differ: {qs:?} vs {ks:?}"
    );
    contract!(
        ks[r - 2] == vs[r - 2],
        "keys and values have different lengths: {ks:?} vs {vs:?}"
    );
    let mut perm: Vec<usize> = (0..r).collect();
    perm.swap(r - 1, r - 2);
    let scale = T::of(1.0 / (qs[r - 1] as f64).sqrt());
    let mut scores = q.matmul(k.permute(&perm)?)?.scale(scale);
    if let Some(m) = mask {
        scores = scores.add(m)?;
    }
    let weights = ctx.dropout(scores.softmax(r - 1)?);
    weights.matmul(v)
}

fn split_heads<'t, T: Real>(x: Var<'t, T>, heads: usize) -> Result<Var<'t, T>> {
    let s = x.shape();
    let (b, t, d) = (s[0], s[1], s[2]);
    x.reshape(&[b, t, heads, d / heads])?.permute(&[0, 2, 1, 3])
}

/// Multi-head attention: `h` attentions over learned projections of
/// `[B, T, d]` inputs, concatenated and projected back to `d`.
pub fn multi_head<'t, T: Real>(
    x_q: Var<'t, T>,
    x_kv: Var<'t, T>,
    w: &AttentionVars<'t, T>,
    mask: Option<Var<'t, T>>,
    ctx: &mut ForwardCtx,
) -> Result<Var<'t, T>> {
    let qs = x_q.shape();
    let kvs = x_kv.shape();
    contract!(
        qs.len() == 3 && kvs.len() == 3 && (kvs[0] == qs[0] || kvs[0] == 1) && qs[2] == kvs[2],
        "multi_head expects [B, T, d] inputs, got {qs:?} and {kvs:?}"
    );
    let d = qs[2];
    contract!(
        w.n_heads > 0 && d.is_multiple_of(w.n_heads),
        "model width {d} not divisible into {} heads",
        w.n_heads
    );
    let q = split_heads(w.q.apply(x_q)?, w.n_heads)?;
    let k = split_heads(w.k.apply(x_kv)?, w.n_heads)?;
    let v = split_heads(w.v.apply(x_kv)?, w.n_heads)?;
    let heads = attention(q, k, v, mask, ctx)?;
    let merged = heads.permute(&[0, 2, 1, 3])?.reshape(&[qs[0], qs[1], d])?;
    w.o.apply(merged)
}

/// Sinusoidal table: `PE[t, 2i] = sin(t / 10000^(2i/d))`, `PE[t, 2i+1] = cos(..)`.
pub fn positional_encoding<T: Real>(len: usize, d_model: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[len, d_model]);
    for pos in 0..len {
        for i in 0..d_model {
            let pair = (i / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(pair / d_model as f64);
            t.data[pos * d_model + i] = T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

/// `[B, 1, 1, S]` additive mask blocking key positions at or beyond each
/// sequence's length.
pub fn key_padding_mask<T: Real>(lens: &[usize], max_len: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[lens.len(), 1, 1, max_len]);
    for (b, &len) in lens.iter().enumerate() {
        for s in len..max_len {
            t.data[b * max_len + s] = T::of(MASKED);
        }
    }
    t
}

/// `[B, 1, T, T]` mask combining causality with key padding.
pub fn causal_mask<T: Real>(lens: &[usize], len: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[lens.len(), 1, len, len]);
    for (b, &valid) in lens.iter().enumerate() {
        for i in 0..len {
            for j in 0..len {
                if j > i || j >= valid {
                    t.data[(b * len + i) * len + j] = T::of(MASKED);
                }
            }
        }
    }
    t
}
