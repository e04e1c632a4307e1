//! Scaled dot-product attention and the two transformer-style blocks the
//! encoders are assembled from.
//!
//! Parameter structs come in pairs: a value struct owning `Tensor`s and an
//! `*Ids` mirror produced by `bind`, which registers every tensor on a tape
//! and is what the forward functions wire together. `for_each` walks tensors
//! in the same fixed order as `bind`; serialization and the optimizer both
//! rely on that order being stable.

use crate::error::{Result, SrxError};
use crate::tensor::{Tape, Tensor, TensorId};
use rand::Rng;

/// One attention head's projection matrices, each `[d_model, d_head]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadIds {
    pub w_q: TensorId,
    pub w_k: TensorId,
    pub w_v: TensorId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadParams {
    pub heads: Vec<HeadParams>,
    /// Output projection, `[n_heads * d_head, d_model]`.
    pub w_o: Tensor,
}

#[derive(Debug, Clone)]
pub struct MultiHeadIds {
    pub heads: Vec<HeadIds>,
    pub w_o: TensorId,
}

impl MultiHeadParams {
    pub fn init(d_model: usize, n_heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(SrxError::validation(format!(
                "d_model {d_model} not divisible into {n_heads} heads"
            )));
        }
        let d_head = d_model / n_heads;
        let heads = (0..n_heads)
            .map(|_| HeadParams {
                w_q: Tensor::fan_in_uniform(d_model, d_head, rng),
                w_k: Tensor::fan_in_uniform(d_model, d_head, rng),
                w_v: Tensor::fan_in_uniform(d_model, d_head, rng),
            })
            .collect();
        Ok(MultiHeadParams { heads, w_o: Tensor::fan_in_uniform(d_model, d_model, rng) })
    }

    pub fn bind(&self, tape: &mut Tape) -> MultiHeadIds {
        MultiHeadIds {
            heads: self
                .heads
                .iter()
                .map(|h| HeadIds {
                    w_q: tape.input(h.w_q.clone()),
                    w_k: tape.input(h.w_k.clone()),
                    w_v: tape.input(h.w_v.clone()),
                })
                .collect(),
            w_o: tape.input(self.w_o.clone()),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        for (i, h) in self.heads.iter().enumerate() {
            f(format!("{prefix}.h{i}.wq"), &h.w_q);
            f(format!("{prefix}.h{i}.wk"), &h.w_k);
            f(format!("{prefix}.h{i}.wv"), &h.w_v);
        }
        f(format!("{prefix}.wo"), &self.w_o);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, h) in self.heads.iter_mut().enumerate() {
            f(format!("{prefix}.h{i}.wq"), &mut h.w_q);
            f(format!("{prefix}.h{i}.wk"), &mut h.w_k);
            f(format!("{prefix}.h{i}.wv"), &mut h.w_v);
        }
        f(format!("{prefix}.wo"), &mut self.w_o);
    }
}

impl MultiHeadIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        for h in &self.heads {
            f(h.w_q);
            f(h.w_k);
            f(h.w_v);
        }
        f(self.w_o);
    }
}

/// Gain and bias of one layer norm, both `[d_model]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct NormIds {
    pub gain: TensorId,
    pub bias: TensorId,
}

impl NormParams {
    pub fn init(d_model: usize) -> Self {
        NormParams {
            gain: Tensor::filled(&[d_model], 1.0),
            bias: Tensor::zeros(&[d_model]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> NormIds {
        NormIds {
            gain: tape.input(self.gain.clone()),
            bias: tape.input(self.bias.clone()),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.gain"), &self.gain);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.gain"), &mut self.gain);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

impl NormIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        f(self.gain);
        f(self.bias);
    }
}

/// Two-layer position-wise feed-forward net.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForwardIds {
    pub w1: TensorId,
    pub b1: TensorId,
    pub w2: TensorId,
    pub b2: TensorId,
}

impl FeedForwardParams {
    pub fn init(d_model: usize, d_ff: usize, rng: &mut impl Rng) -> Self {
        FeedForwardParams {
            w1: Tensor::fan_in_uniform(d_model, d_ff, rng),
            b1: Tensor::zeros(&[d_ff]),
            w2: Tensor::fan_in_uniform(d_ff, d_model, rng),
            b2: Tensor::zeros(&[d_model]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> FeedForwardIds {
        FeedForwardIds {
            w1: tape.input(self.w1.clone()),
            b1: tape.input(self.b1.clone()),
            w2: tape.input(self.w2.clone()),
            b2: tape.input(self.b2.clone()),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.w1"), &self.w1);
        f(format!("{prefix}.b1"), &self.b1);
        f(format!("{prefix}.w2"), &self.w2);
        f(format!("{prefix}.b2"), &self.b2);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.w1"), &mut self.w1);
        f(format!("{prefix}.b1"), &mut self.b1);
        f(format!("{prefix}.w2"), &mut self.w2);
        f(format!("{prefix}.b2"), &mut self.b2);
    }
}

impl FeedForwardIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        f(self.w1);
        f(self.b1);
        f(self.w2);
        f(self.b2);
    }
}

/// Self-attention encoder block: attend, add residual, norm, feed forward,
/// add residual, norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub attn: MultiHeadParams,
    pub norm1: NormParams,
    pub ff: FeedForwardParams,
    pub norm2: NormParams,
}

#[derive(Debug, Clone)]
pub struct BlockIds {
    pub attn: MultiHeadIds,
    pub norm1: NormIds,
    pub ff: FeedForwardIds,
    pub norm2: NormIds,
}

impl BlockParams {
    pub fn init(d_model: usize, n_heads: usize, d_ff: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(BlockParams {
            attn: MultiHeadParams::init(d_model, n_heads, rng)?,
            norm1: NormParams::init(d_model),
            ff: FeedForwardParams::init(d_model, d_ff, rng),
            norm2: NormParams::init(d_model),
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> BlockIds {
        BlockIds {
            attn: self.attn.bind(tape),
            norm1: self.norm1.bind(tape),
            ff: self.ff.bind(tape),
            norm2: self.norm2.bind(tape),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.attn.for_each(&format!("{prefix}.attn"), f);
        self.norm1.for_each(&format!("{prefix}.norm1"), f);
        self.ff.for_each(&format!("{prefix}.ff"), f);
        self.norm2.for_each(&format!("{prefix}.norm2"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.attn.for_each_mut(&format!("{prefix}.attn"), f);
        self.norm1.for_each_mut(&format!("{prefix}.norm1"), f);
        self.ff.for_each_mut(&format!("{prefix}.ff"), f);
        self.norm2.for_each_mut(&format!("{prefix}.norm2"), f);
    }
}

impl BlockIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        self.attn.for_each(f);
        self.norm1.for_each(f);
        self.ff.for_each(f);
        self.norm2.for_each(f);
    }
}

/// Block that folds a second modality in: self-attend the context, attend
/// into it from the query side, then feed forward. Three norms, one after
/// each residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossModalParams {
    pub self_attn: MultiHeadParams,
    pub self_norm: NormParams,
    pub cross_attn: MultiHeadParams,
    pub cross_norm: NormParams,
    pub ff: FeedForwardParams,
    pub out_norm: NormParams,
}

#[derive(Debug, Clone)]
pub struct CrossModalIds {
    pub self_attn: MultiHeadIds,
    pub self_norm: NormIds,
    pub cross_attn: MultiHeadIds,
    pub cross_norm: NormIds,
    pub ff: FeedForwardIds,
    pub out_norm: NormIds,
}

impl CrossModalParams {
    pub fn init(d_model: usize, n_heads: usize, d_ff: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(CrossModalParams {
            self_attn: MultiHeadParams::init(d_model, n_heads, rng)?,
            self_norm: NormParams::init(d_model),
            cross_attn: MultiHeadParams::init(d_model, n_heads, rng)?,
            cross_norm: NormParams::init(d_model),
            ff: FeedForwardParams::init(d_model, d_ff, rng),
            out_norm: NormParams::init(d_model),
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> CrossModalIds {
        CrossModalIds {
            self_attn: self.self_attn.bind(tape),
            self_norm: self.self_norm.bind(tape),
            cross_attn: self.cross_attn.bind(tape),
            cross_norm: self.cross_norm.bind(tape),
            ff: self.ff.bind(tape),
            out_norm: self.out_norm.bind(tape),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.self_attn.for_each(&format!("{prefix}.self_attn"), f);
        self.self_norm.for_each(&format!("{prefix}.self_norm"), f);
        self.cross_attn.for_each(&format!("{prefix}.cross_attn"), f);
        self.cross_norm.for_each(&format!("{prefix}.cross_norm"), f);
        self.ff.for_each(&format!("{prefix}.ff"), f);
        self.out_norm.for_each(&format!("{prefix}.out_norm"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.self_attn.for_each_mut(&format!("{prefix}.self_attn"), f);
        self.self_norm.for_each_mut(&format!("{prefix}.self_norm"), f);
        self.cross_attn.for_each_mut(&format!("{prefix}.cross_attn"), f);
        self.cross_norm.for_each_mut(&format!("{prefix}.cross_norm"), f);
        self.ff.for_each_mut(&format!("{prefix}.ff"), f);
        self.out_norm.for_each_mut(&format!("{prefix}.out_norm"), f);
    }
}

impl CrossModalIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        self.self_attn.for_each(f);
        self.self_norm.for_each(f);
        self.cross_attn.for_each(f);
        self.cross_norm.for_each(f);
        self.ff.for_each(f);
        self.out_norm.for_each(f);
    }
}

/// softmax(q kT / sqrt(d)) v with a row-wise softmax.
///
/// `q` is `[m, d]`, `k` is `[n, d]`, `v` is `[n, dv]`; result is `[m, dv]`.
pub fn scaled_dot_attention(
    tape: &mut Tape,
    q: TensorId,
    k: TensorId,
    v: TensorId,
) -> Result<TensorId> {
    let (_, dq) = tape.value(q).dims2()?;
    let (nk, dk) = tape.value(k).dims2()?;
    let (nv, _) = tape.value(v).dims2()?;
    if dq != dk {
        return Err(SrxError::shape(format!("attention query dim {dq} vs key dim {dk}")));
    }
    if nk != nv {
        return Err(SrxError::shape(format!("attention {nk} keys vs {nv} values")));
    }
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (dq as f64).sqrt());
    let weights = tape.softmax(scaled, 1)?;
    tape.matmul(weights, v)
}

/// Project into each head, attend per head, concatenate, project out.
pub fn multi_head(
    tape: &mut Tape,
    params: &MultiHeadIds,
    q: TensorId,
    k: TensorId,
    v: TensorId,
) -> Result<TensorId> {
    let mut outs = Vec::with_capacity(params.heads.len());
    for h in &params.heads {
        let qh = tape.matmul(q, h.w_q)?;
        let kh = tape.matmul(k, h.w_k)?;
        let vh = tape.matmul(v, h.w_v)?;
        outs.push(scaled_dot_attention(tape, qh, kh, vh)?);
    }
    let cat = tape.concat(&outs, 1)?;
    tape.matmul(cat, params.w_o)
}

/// `[m, d_model] -> [m, d_model]` self-attention encoder block.
pub fn encoder_block(tape: &mut Tape, params: &BlockIds, f: TensorId) -> Result<TensorId> {
    let attended = multi_head(tape, &params.attn, f, f, f)?;
    let res1 = tape.add(attended, f)?;
    let z = tape.layer_norm(res1, params.norm1.gain, params.norm1.bias)?;
    let ff_out = feed_forward(tape, &params.ff, z)?;
    let res2 = tape.add(ff_out, z)?;
    tape.layer_norm(res2, params.norm2.gain, params.norm2.bias)
}

fn feed_forward(tape: &mut Tape, ff: &FeedForwardIds, x: TensorId) -> Result<TensorId> {
    let h = tape.matmul(x, ff.w1)?;
    let h = tape.add_bias(h, ff.b1)?;
    let h = tape.relu(h);
    let out = tape.matmul(h, ff.w2)?;
    tape.add_bias(out, ff.b2)
}

/// Fuse query-side features `query` `[m, d]` into context features `context`
/// `[n, d]`; the output keeps the context's `n` rows.
///
/// The cross-attended query rows are mean-pooled into one summary vector and
/// broadcast over the context rows before the residual. Pooling regardless
/// of whether `m == n` keeps the block invariant to row order on both sides,
/// which the pooled embeddings downstream depend on.
pub fn cross_modal_block(
    tape: &mut Tape,
    params: &CrossModalIds,
    query: TensorId,
    context: TensorId,
) -> Result<TensorId> {
    let (_, dq) = tape.value(query).dims2()?;
    let (n, dc) = tape.value(context).dims2()?;
    if dq != dc {
        return Err(SrxError::shape(format!("cross-modal dims {dq} vs {dc}")));
    }
    let self_att = multi_head(tape, &params.self_attn, context, context, context)?;
    let res = tape.add(self_att, context)?;
    let z = tape.layer_norm(res, params.self_norm.gain, params.self_norm.bias)?;

    let crossed = multi_head(tape, &params.cross_attn, query, z, z)?;
    let pooled = tape.mean_pool(crossed, 0)?;
    let aligned = tape.stack(&vec![pooled; n])?;
    let res2 = tape.add(aligned, z)?;
    let c = tape.layer_norm(res2, params.cross_norm.gain, params.cross_norm.bias)?;

    let ff_out = feed_forward(tape, &params.ff, c)?;
    let res3 = tape.add(ff_out, c)?;
    tape.layer_norm(res3, params.out_norm.gain, params.out_norm.bias)
}
