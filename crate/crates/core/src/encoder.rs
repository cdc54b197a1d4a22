//! Transformer encoder for the temporal axis.
//!
//! Post-norm layers: multi-head self-attention, dropout, residual, layer
//! norm, then a rectified feedforward sub-layer with the same wrapping. No
//! causal mask is applied; every timestep sees the whole window.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::{config, input, Result};
use crate::nn::{dropout, ForwardCtx, LayerNorm, Linear};
use crate::params::ParamStore;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub epsilon: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            d_ff: 256,
            layers: 2,
            dropout: 0.1,
            max_len: 512,
            epsilon: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 || self.layers == 0 || self.max_len == 0 {
            return config("encoder sizes must be positive");
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return config(format!(
                "encoder.d_model ({}) must be divisible by encoder.heads ({})",
                self.d_model, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return config("encoder.dropout must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return config("encoder.epsilon must be positive");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// `softmax(Q K^T / sqrt(d_k)) V`, softmax over the key axis.
pub fn scaled_dot_attention<T: Scalar>(q: ArrayView2<T>, k: ArrayView2<T>, v: ArrayView2<T>) -> Result<Array2<T>> {
    Ok(attention_with_weights(q, k, v)?.0)
}

/// Like [`scaled_dot_attention`] but also returns the `m x n` weight matrix.
pub fn attention_with_weights<T: Scalar>(
    q: ArrayView2<T>,
    k: ArrayView2<T>,
    v: ArrayView2<T>,
) -> Result<(Array2<T>, Array2<T>)> {
    if q.ncols() != k.ncols() {
        return input(format!("query width {} differs from key width {}", q.ncols(), k.ncols()));
    }
    if k.nrows() != v.nrows() {
        return input(format!("{} keys but {} values", k.nrows(), v.nrows()));
    }
    if k.nrows() == 0 {
        return input("attention needs at least one key");
    }
    let scale = T::one() / T::of_usize(q.ncols().max(1)).sqrt();
    let mut w = q.dot(&k.t()) * scale;
    softmax_rows(&mut w);
    Ok((w.dot(&v), w))
}

/// Fixed sinusoidal table: even columns `sin(pos / 10000^(2i/d))`, odd
/// columns the matching cosine.
pub fn positional_encoding<T: Scalar>(len: usize, d_model: usize) -> Array2<T> {
    Array2::from_shape_fn((len, d_model), |(pos, c)| {
        let pair = (c / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
        T::of(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, d_model: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.query"), d_model, d_model, rng),
            key: Linear::new(store, &format!("{name}.key"), d_model, d_model, rng),
            value: Linear::new(store, &format!("{name}.value"), d_model, d_model, rng),
            output: Linear::new(store, &format!("{name}.output"), d_model, d_model, rng),
            heads,
        }
    }

    /// Returns the output and the attention node (for inspecting weights).
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var, groups: usize) -> Result<(Var, Var)> {
        let q = self.query.forward(tape, p, x);
        let k = self.key.forward(tape, p, x);
        let v = self.value.forward(tape, p, x);
        let att = tape.attention(q, k, v, groups, self.heads)?;
        Ok((self.output.forward(tape, p, att), att))
    }
}

/// Head-by-head evaluation of a [`MultiHeadAttention`] on one sequence using
/// [`scaled_dot_attention`].
pub fn multi_head_attention<T: Scalar>(x: ArrayView2<T>, mha: &MultiHeadAttention, store: &ParamStore<T>) -> Result<Array2<T>> {
    let lin = |l: &Linear, a: ArrayView2<T>| -> Result<Array2<T>> {
        let w = store.get(l.weight);
        if a.ncols() != w.nrows() {
            return input(format!("input width {} does not match d_model {}", a.ncols(), w.nrows()));
        }
        let mut y = a.dot(w);
        if let Some(b) = l.bias {
            y += store.get(b);
        }
        Ok(y)
    };
    let q = lin(&mha.query, x)?;
    let k = lin(&mha.key, x)?;
    let v = lin(&mha.value, x)?;
    let d = q.ncols();
    if d % mha.heads != 0 {
        return config("d_model must be divisible by the head count");
    }
    let dk = d / mha.heads;
    let mut concat = Array2::zeros(q.dim());
    for h in 0..mha.heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let o = scaled_dot_attention(q.slice(cols), k.slice(cols), v.slice(cols))?;
        concat.slice_mut(cols).assign(&o);
    }
    lin(&mha.output, concat.view())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
}

/// Stack of encoder layers sharing one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEncoder {
    pub cfg: EncoderConfig,
    pub layers: Vec<EncoderLayer>,
}

impl TemporalEncoder {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, cfg: EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers)
            .map(|l| {
                let prefix = format!("{name}.layer{l}");
                EncoderLayer {
                    attention: MultiHeadAttention::new(store, &format!("{prefix}.attn"), cfg.d_model, cfg.heads, rng),
                    norm1: LayerNorm::new(store, &format!("{prefix}.norm1"), cfg.d_model, cfg.epsilon),
                    ff_in: Linear::new(store, &format!("{prefix}.ff_in"), cfg.d_model, cfg.d_ff, rng),
                    ff_out: Linear::new(store, &format!("{prefix}.ff_out"), cfg.d_ff, cfg.d_model, rng),
                    norm2: LayerNorm::new(store, &format!("{prefix}.norm2"), cfg.d_model, cfg.epsilon),
                }
            })
            .collect();
        Ok(Self { cfg, layers })
    }

    /// Encodes `groups` stacked sequences of equal length; `x` is
    /// `(groups * len) x d_model` and each block attends within itself.
    /// Returns the output and every layer's attention node.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
        groups: usize,
        ctx: &mut ForwardCtx,
    ) -> Result<(Var, Vec<Var>)> {
        let (rows, width) = tape.value(x).dim();
        if width != self.cfg.d_model {
            return input(format!("encoder input width {width}, expected {}", self.cfg.d_model));
        }
        if groups == 0 || rows % groups != 0 {
            return input(format!("{rows} rows do not split into {groups} sequences"));
        }
        if rows / groups > self.cfg.max_len {
            return input(format!("sequence length {} exceeds max_len {}", rows / groups, self.cfg.max_len));
        }
        let mut h = x;
        let mut attn_nodes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (a, node) = layer.attention.forward(tape, p, h, groups)?;
            attn_nodes.push(node);
            let a = dropout(tape, a, self.cfg.dropout, ctx);
            let r = tape.add(h, a);
            let n1 = layer.norm1.forward(tape, p, r);
            let f = layer.ff_in.forward(tape, p, n1);
            let f = tape.relu(f);
            let f = layer.ff_out.forward(tape, p, f);
            let f = dropout(tape, f, self.cfg.dropout, ctx);
            let r2 = tape.add(n1, f);
            h = layer.norm2.forward(tape, p, r2);
        }
        Ok((h, attn_nodes))
    }
}

/// Runs the stack on a single `len x d_model` sequence.
pub fn encoder_stack<T: Scalar>(
    x: ArrayView2<T>,
    encoder: &TemporalEncoder,
    store: &ParamStore<T>,
    ctx: &mut ForwardCtx,
) -> Result<Array2<T>> {
    let mut tape = Tape::new();
    let p = tape.params(store);
    let xv = tape.input(x.to_owned());
    let (out, _) = encoder.forward(&mut tape, &p, xv, 1, ctx)?;
    Ok(tape.value(out).clone())
}
