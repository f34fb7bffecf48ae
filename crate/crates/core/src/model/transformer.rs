use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{
    causal_mask, key_padding_mask, multi_head, positional_encoding, AttentionVars, ForwardCtx,
    LinearVars,
};
use super::vocab::PAD;
use crate::error::{contract, Result};
use crate::features::FeatureStack;
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
struct LinearIdx {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormIdx {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct AttnIdx {
    q: LinearIdx,
    k: LinearIdx,
    v: LinearIdx,
    o: LinearIdx,
}

#[derive(Debug, Clone)]
struct EncoderLayerIdx {
    self_attn: AttnIdx,
    norm1: NormIdx,
    ff1: LinearIdx,
    ff2: LinearIdx,
    norm2: NormIdx,
}

#[derive(Debug, Clone)]
struct DecoderLayerIdx {
    self_attn: AttnIdx,
    norm1: NormIdx,
    cross_attn: AttnIdx,
    norm2: NormIdx,
    ff1: LinearIdx,
    ff2: LinearIdx,
    norm3: NormIdx,
}

#[derive(Debug, Clone)]
struct Layout {
    input: LinearIdx,
    embed: usize,
    encoder: Vec<EncoderLayerIdx>,
    decoder: Vec<DecoderLayerIdx>,
    output: LinearIdx,
}

struct Builder<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> LinearIdx {
        LinearIdx {
            weight: self
                .store
                .uniform(format!("{name}.weight"), &[d_in, d_out], d_in, self.rng),
            bias: self.store.uniform(format!("{name}.bias"), &[d_out], d_in, self.rng),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.store.constant(format!("{name}.gain"), &[d], 1.0),
            bias: self.store.constant(format!("{name}.bias"), &[d], 0.0),
        }
    }

    fn attention(&mut self, name: &str, d: usize) -> AttnIdx {
        AttnIdx {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }
}

/// Padded `[B, S, width]` encoder input with per-row valid lengths.
#[derive(Debug, Clone)]
pub struct SourceBatch<T> {
    pub data: Tensor<T>,
    pub lens: Vec<usize>,
}

impl<T: Real> SourceBatch<T> {
    pub fn from_stacks(stacks: &[&FeatureStack]) -> Result<Self> {
        contract!(!stacks.is_empty(), "empty source batch");
        let width = stacks[0].width;
        contract!(
            stacks.iter().all(|s| s.width == width),
            "feature widths differ within a batch"
        );
        contract!(
            stacks.iter().all(|s| s.n_frames > 0),
            "feature stack without frames"
        );
        let max = stacks.iter().map(|s| s.n_frames).max().unwrap_or(0);
        let mut data = Tensor::zeros(&[stacks.len(), max, width]);
        for (b, s) in stacks.iter().enumerate() {
            let dst = &mut data.data[b * max * width..(b * max + s.n_frames) * width];
            for (d, &v) in dst.iter_mut().zip(&s.data) {
                *d = T::of(v as f64);
            }
        }
        Ok(Self {
            data,
            lens: stacks.iter().map(|s| s.n_frames).collect(),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lens.len()
    }

    pub fn max_len(&self) -> usize {
        self.data.shape[1]
    }
}

/// Padded `[B, T]` token ids with per-row valid lengths.
#[derive(Debug, Clone)]
pub struct TargetBatch {
    pub tokens: Vec<usize>,
    pub lens: Vec<usize>,
    pub max_len: usize,
}

impl TargetBatch {
    pub fn from_seqs(seqs: &[&[usize]]) -> Result<Self> {
        contract!(!seqs.is_empty(), "empty target batch");
        contract!(seqs.iter().all(|s| !s.is_empty()), "empty target sequence");
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut tokens = vec![PAD; seqs.len() * max_len];
        for (b, s) in seqs.iter().enumerate() {
            tokens[b * max_len..b * max_len + s.len()].copy_from_slice(s);
        }
        Ok(Self {
            tokens,
            lens: seqs.iter().map(|s| s.len()).collect(),
            max_len,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lens.len()
    }
}

/// Encoder output together with its key padding mask.
#[derive(Clone, Copy)]
pub struct Memory<'t, T: Real> {
    pub states: Var<'t, T>,
    pub mask: Var<'t, T>,
}

/// Parameters of one model instance placed on a tape.
pub struct Bound<'t, T: Real> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Real> Bound<'t, T> {
    fn linear(&self, i: LinearIdx) -> LinearVars<'t, T> {
        LinearVars {
            weight: self.vars[i.weight],
            bias: self.vars[i.bias],
        }
    }

    fn attn(&self, i: &AttnIdx, heads: usize) -> AttentionVars<'t, T> {
        AttentionVars {
            q: self.linear(i.q),
            k: self.linear(i.k),
            v: self.linear(i.v),
            o: self.linear(i.o),
            n_heads: heads,
        }
    }

    fn norm(&self, x: Var<'t, T>, i: NormIdx) -> Result<Var<'t, T>> {
        x.layer_norm(self.vars[i.gain], self.vars[i.bias], LN_EPS)
    }
}

/// Post-norm Transformer encoder-decoder mapping feature frames to splice
/// tokens.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    layout: Layout,
    src_pe: Tensor<T>,
    tgt_pe: Tensor<T>,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let mut b = Builder {
            store: &mut store,
            rng: &mut rng,
        };
        let input = b.linear("input", config.input_width, d);
        let embed = b.store.uniform("embed", &[config.vocab, d], d, b.rng);
        let encoder = (0..config.n_encoder_layers)
            .map(|l| EncoderLayerIdx {
                self_attn: b.attention(&format!("encoder.{l}.self_attn"), d),
                norm1: b.norm(&format!("encoder.{l}.norm1"), d),
                ff1: b.linear(&format!("encoder.{l}.ff1"), d, config.d_ff),
                ff2: b.linear(&format!("encoder.{l}.ff2"), config.d_ff, d),
                norm2: b.norm(&format!("encoder.{l}.norm2"), d),
            })
            .collect();
        let decoder = (0..config.n_decoder_layers)
            .map(|l| DecoderLayerIdx {
                self_attn: b.attention(&format!("decoder.{l}.self_attn"), d),
                norm1: b.norm(&format!("decoder.{l}.norm1"), d),
                cross_attn: b.attention(&format!("decoder.{l}.cross_attn"), d),
                norm2: b.norm(&format!("decoder.{l}.norm2"), d),
                ff1: b.linear(&format!("decoder.{l}.ff1"), d, config.d_ff),
                ff2: b.linear(&format!("decoder.{l}.ff2"), config.d_ff, d),
                norm3: b.norm(&format!("decoder.{l}.norm3"), d),
            })
            .collect();
        let output = b.linear("output", d, config.vocab);
        let layout = Layout {
            input,
            embed,
            encoder,
            decoder,
            output,
        };
        Ok(Self {
            src_pe: positional_encoding(config.max_src_len, d),
            tgt_pe: positional_encoding(config.max_tgt_len, d),
            config,
            params: store,
            layout,
        })
    }

    /// Replaces the parameter values; names and shapes must match this
    /// model's layout exactly.
    pub fn with_params(mut self, params: ParamStore<T>) -> Result<Self> {
        contract!(
            params.len() == self.params.len(),
            "expected {} parameter tensors, got {}",
            self.params.len(),
            params.len()
        );
        for (mine, theirs) in self.params.params.iter().zip(&params.params) {
            contract!(
                mine.name == theirs.name && mine.value.shape == theirs.value.shape,
                "parameter {} {:?} does not match {} {:?}",
                theirs.name,
                theirs.value.shape,
                mine.name,
                mine.value.shape
            );
        }
        self.params = params;
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            src_pe: self.src_pe.cast(),
            tgt_pe: self.tgt_pe.cast(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: (0..self.params.len())
                .map(|i| tape.param(&self.params, i))
                .collect(),
        }
    }

    fn pe_rows(table: &Tensor<T>, len: usize) -> Tensor<T> {
        let d = table.shape[1];
        Tensor {
            shape: vec![len, d],
            data: table.data[..len * d].to_vec(),
        }
    }

    pub fn encode<'t>(
        &self,
        bound: &Bound<'t, T>,
        src: &SourceBatch<T>,
        ctx: &mut ForwardCtx,
    ) -> Result<Memory<'t, T>> {
        let tape = bound.vars[0].tape();
        let (b, s) = (src.batch_size(), src.max_len());
        let width = src.data.shape[2];
        contract!(
            width == self.config.input_width,
            "feature width {width} does not match model input width {}",
            self.config.input_width
        );
        contract!(
            s <= self.config.max_src_len,
            "source of {s} frames exceeds the model limit of {} frames",
            self.config.max_src_len
        );
        contract!(src.lens.iter().all(|&l| l > 0), "empty source sequence");
        let heads = self.config.n_heads;
        let pe = tape.constant(Self::pe_rows(&self.src_pe, s));
        let mask = tape.constant(key_padding_mask(&src.lens, s));
        let x = tape.constant(src.data.clone());
        let mut x = ctx.dropout(bound.linear(self.layout.input).apply(x)?.add(pe)?);
        for layer in &self.layout.encoder {
            let attn = bound.attn(&layer.self_attn, heads);
            let a = multi_head(x, x, &attn, Some(mask), ctx)?;
            x = bound.norm(x.add(ctx.dropout(a))?, layer.norm1)?;
            let h = ctx.dropout(bound.linear(layer.ff1).apply(x)?.relu());
            let f = bound.linear(layer.ff2).apply(h)?;
            x = bound.norm(x.add(ctx.dropout(f))?, layer.norm2)?;
        }
        debug_assert_eq!(x.shape(), vec![b, s, self.config.d_model]);
        Ok(Memory { states: x, mask })
    }

    /// Decoder logits `[B, T, vocab]` for teacher-forced prefixes. The
    /// memory batch may be 1 and is then shared by every prefix.
    pub fn decode<'t>(
        &self,
        bound: &Bound<'t, T>,
        memory: &Memory<'t, T>,
        tgt: &TargetBatch,
        ctx: &mut ForwardCtx,
    ) -> Result<Var<'t, T>> {
        let tape = bound.vars[0].tape();
        let (b, t) = (tgt.batch_size(), tgt.max_len);
        let d = self.config.d_model;
        contract!(
            t <= self.config.max_tgt_len,
            "target prefix of {t} tokens exceeds the model limit of {}",
            self.config.max_tgt_len
        );
        let mem_b = memory.states.shape()[0];
        contract!(
            mem_b == b || mem_b == 1,
            "memory batch {mem_b} incompatible with target batch {b}"
        );
        let heads = self.config.n_heads;
        let emb = bound.vars[self.layout.embed]
            .embedding(&tgt.tokens)?
            .reshape(&[b, t, d])?
            .scale(T::of((d as f64).sqrt()));
        let pe = tape.constant(Self::pe_rows(&self.tgt_pe, t));
        let self_mask = tape.constant(causal_mask(&tgt.lens, t));
        let mut x = ctx.dropout(emb.add(pe)?);
        for layer in &self.layout.decoder {
            let sa = bound.attn(&layer.self_attn, heads);
            let a = multi_head(x, x, &sa, Some(self_mask), ctx)?;
            x = bound.norm(x.add(ctx.dropout(a))?, layer.norm1)?;
            let ca = bound.attn(&layer.cross_attn, heads);
            let c = multi_head(x, memory.states, &ca, Some(memory.mask), ctx)?;
            x = bound.norm(x.add(ctx.dropout(c))?, layer.norm2)?;
            let h = ctx.dropout(bound.linear(layer.ff1).apply(x)?.relu());
            let f = bound.linear(layer.ff2).apply(h)?;
            x = bound.norm(x.add(ctx.dropout(f))?, layer.norm3)?;
        }
        bound.linear(self.layout.output).apply(x)
    }

    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        src: &SourceBatch<T>,
        tgt: &TargetBatch,
        ctx: &mut ForwardCtx,
    ) -> Result<Var<'t, T>> {
        contract!(
            src.batch_size() == tgt.batch_size(),
            "source batch {} and target batch {} differ",
            src.batch_size(),
            tgt.batch_size()
        );
        let memory = self.encode(bound, src, ctx)?;
        self.decode(bound, &memory, tgt, ctx)
    }

    /// Teacher-forced cross-entropy over non-pad target positions.
    pub fn loss<'t>(
        &self,
        bound: &Bound<'t, T>,
        src: &SourceBatch<T>,
        inputs: &TargetBatch,
        targets: &TargetBatch,
        ctx: &mut ForwardCtx,
    ) -> Result<Var<'t, T>> {
        contract!(
            inputs.max_len == targets.max_len && inputs.lens == targets.lens,
            "decoder inputs and targets are not aligned"
        );
        let logits = self.forward(bound, src, inputs, ctx)?;
        let rows = inputs.batch_size() * inputs.max_len;
        logits
            .reshape(&[rows, self.config.vocab])?
            .cross_entropy(&targets.tokens, PAD)
    }

    /// Convenience single-sample logits `[T, vocab]` in evaluation mode.
    pub fn logits(&self, features: &FeatureStack, prefix: &[usize]) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let src = SourceBatch::from_stacks(&[features])?;
        let tgt = TargetBatch::from_seqs(&[prefix])?;
        let out = self.forward(&bound, &src, &tgt, &mut ForwardCtx::eval())?;
        let mut v = out.value();
        v.shape = vec![prefix.len(), self.config.vocab];
        Ok(v)
    }
}
