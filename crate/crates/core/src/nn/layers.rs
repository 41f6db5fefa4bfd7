//! Transformer building blocks over the autograd graph. Linear maps are
//! `y = x W + b` with `W [in, out]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{AttnDims, Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::Scalar;

/// Forward-pass mode. Training mode draws dropout masks from `rng`.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut ChaCha8Rng },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// Inverted dropout: zero with probability `p`, survivors scaled by `1/(1-p)`.
pub fn dropout_mask<T: Scalar>(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - p));
    (0..n)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

pub fn dropout<T: Scalar>(g: &mut Graph<T>, x: Var, mode: &mut Mode<'_>) -> Var {
    match mode {
        Mode::Train { dropout, rng } if *dropout > 0.0 => {
            let mask = dropout_mask(g.value(x).numel(), *dropout, rng);
            g.mul_const(x, mask)
        }
        _ => x,
    }
}

pub fn xavier<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(vec![fan_in, fan_out], |_| T::lit(rng.random_range(-a..a)))
}

pub fn normal<T: Scalar>(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor<T> {
    let d = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| T::lit(d.sample(rng)))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: ps.add(format!("{name}.w"), xavier(rng, din, dout)),
            b: ps.add(format!("{name}.b"), Tensor::zeros(vec![dout])),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.w));
        g.add_bias(y, p.var(self.b))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        Self {
            gamma: ps.add(format!("{name}.gamma"), Tensor::full(vec![d], T::one())),
            beta: ps.add(format!("{name}.beta"), Tensor::zeros(vec![d])),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.layer_norm(x, p.var(self.gamma), p.var(self.beta), T::lit(Self::EPS))
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, name: &str, d: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            q: Linear::new(ps, &format!("{name}.q"), d, d, rng),
            k: Linear::new(ps, &format!("{name}.k"), d, d, rng),
            v: Linear::new(ps, &format!("{name}.v"), d, d, rng),
            o: Linear::new(ps, &format!("{name}.o"), d, d, rng),
            heads,
        }
    }

    /// Attention of `x [batch*q_len, D]` over `mem [batch*kv_len, D]`.
    /// Returns the output and the attention node (for its probabilities).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        mem: Var,
        batch: usize,
        q_len: usize,
        kv_len: usize,
    ) -> (Var, Var) {
        let q = self.q.forward(g, p, x);
        let k = self.k.forward(g, p, mem);
        let v = self.v.forward(g, p, mem);
        let dims = AttnDims {
            batch,
            heads: self.heads,
            q_len,
            kv_len,
        };
        let a = g.attention(q, k, v, dims);
        (self.o.forward(g, p, a), a)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, name: &str, d: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            l1: Linear::new(ps, &format!("{name}.l1"), d, d_ff, rng),
            l2: Linear::new(ps, &format!("{name}.l2"), d_ff, d, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, mode: &mut Mode<'_>) -> Var {
        let h = self.l1.forward(g, p, x);
        let h = g.gelu(h);
        let h = dropout(g, h, mode);
        self.l2.forward(g, p, h)
    }
}

/// Pre-norm self-attention block.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderBlock {
    pub fn new<T: Scalar>(
        ps: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), d),
            attn: MultiHeadAttention::new(ps, &format!("{name}.attn"), d, heads, rng),
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), d),
            ff: FeedForward::new(ps, &format!("{name}.ff"), d, d_ff, rng),
        }
    }

    /// Returns the block output and its attention node.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        batch: usize,
        n: usize,
        mode: &mut Mode<'_>,
    ) -> (Var, Var) {
        let h = self.ln1.forward(g, p, x);
        let (a, probs) = self.attn.forward(g, p, h, h, batch, n, n);
        let a = dropout(g, a, mode);
        let x = g.add(x, a);
        let h = self.ln2.forward(g, p, x);
        let f = self.ff.forward(g, p, h, mode);
        let f = dropout(g, f, mode);
        (g.add(x, f), probs)
    }
}

/// Pre-norm block with self-attention, cross-attention over a memory and a
/// feed-forward layer.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub ln1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub ln3: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderBlock {
    pub fn new<T: Scalar>(
        ps: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), d),
            self_attn: MultiHeadAttention::new(ps, &format!("{name}.self"), d, heads, rng),
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), d),
            cross_attn: MultiHeadAttention::new(ps, &format!("{name}.cross"), d, heads, rng),
            ln3: LayerNorm::new(ps, &format!("{name}.ln3"), d),
            ff: FeedForward::new(ps, &format!("{name}.ff"), d, d_ff, rng),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        mem: Var,
        batch: usize,
        n: usize,
        mem_len: usize,
        mode: &mut Mode<'_>,
    ) -> Var {
        let h = self.ln1.forward(g, p, x);
        let (a, _) = self.self_attn.forward(g, p, h, h, batch, n, n);
        let a = dropout(g, a, mode);
        let x = g.add(x, a);
        let h = self.ln2.forward(g, p, x);
        let (c, _) = self.cross_attn.forward(g, p, h, mem, batch, n, mem_len);
        let c = dropout(g, c, mode);
        let x = g.add(x, c);
        let h = self.ln3.forward(g, p, x);
        let f = self.ff.forward(g, p, h, mode);
        let f = dropout(g, f, mode);
        g.add(x, f)
    }
}
