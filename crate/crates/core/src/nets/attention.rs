//! Spatial, cross and motion attention, and the transformer site that
//! chains them.

use super::layers::{from_tokens, layer_norm, linear, sinusoidal, to_tokens};
use super::params::{Params, SpecSink};
use crate::tensor::{Element, Tensor};

/// Scaled dot-product attention over `[B, Lq, C]` queries and `[B, Lk, C]`
/// keys/values, split into `heads` heads of width `C / heads`.
pub fn multihead_attention<T: Element>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>, heads: usize) -> Tensor<T> {
    let &[b, lq, c] = q.shape() else {
        panic!("attention expects [B, L, C] queries, got {:?}", q.shape());
    };
    let lk = k.dim(1);
    assert_eq!(c % heads, 0, "width {c} not divisible by {heads} heads");
    let d = c / heads;
    let split = |t: &Tensor<T>, l: usize| {
        if heads == 1 {
            t.clone()
        } else {
            t.reshape(&[b, l, heads, d]).permute(&[0, 2, 1, 3]).reshape(&[b * heads, l, d])
        }
    };
    let (qh, kh, vh) = (split(q, lq), split(k, lk), split(v, lk));
    let weights = qh.matmul_t(&kh, false, true).scale(1.0 / (d as f64).sqrt()).softmax_last();
    let out = weights.matmul(&vh);
    if heads == 1 {
        out
    } else {
        out.reshape(&[b, heads, lq, d]).permute(&[0, 2, 1, 3]).reshape(&[b, lq, c])
    }
}

fn qkv_specs(s: &mut SpecSink, name: &str, c: usize, kv_dim: usize) {
    s.linear(&format!("{name}.q"), c, c, false);
    s.linear(&format!("{name}.k"), kv_dim, c, false);
    s.linear(&format!("{name}.v"), kv_dim, c, false);
}

/// Self-attention whose keys and values also see `bank` tokens.
///
/// `x` is `[B, L, C]`; `bank`, when present, is `[B, L', C]` and is
/// concatenated to `x` along the token axis before the key/value
/// projections. With no bank this is plain self-attention. Returns the
/// output projection, `[B, L, C]`, without the residual.
pub fn spatial_attention<T: Element>(
    p: &Params<T>,
    name: &str,
    x: &Tensor<T>,
    bank: Option<&Tensor<T>>,
    heads: usize,
) -> Tensor<T> {
    let kv = match bank {
        Some(b) => {
            assert_eq!(b.dim(0), x.dim(0), "bank batch does not match");
            assert_eq!(b.dim(2), x.dim(2), "bank width does not match");
            Tensor::concat(&[x, b], 1)
        }
        None => x.clone(),
    };
    let q = linear(p, &format!("{name}.q"), x);
    let k = linear(p, &format!("{name}.k"), &kv);
    let v = linear(p, &format!("{name}.v"), &kv);
    linear(p, &format!("{name}.out"), &multihead_attention(&q, &k, &v, heads))
}

/// Queries from `x` `[B, L, C]`, keys/values from `ctx` `[B, K, D]`.
pub fn cross_attention<T: Element>(p: &Params<T>, name: &str, x: &Tensor<T>, ctx: &Tensor<T>, heads: usize) -> Tensor<T> {
    let q = linear(p, &format!("{name}.q"), x);
    let k = linear(p, &format!("{name}.k"), ctx);
    let v = linear(p, &format!("{name}.v"), ctx);
    linear(p, &format!("{name}.out"), &multihead_attention(&q, &k, &v, heads))
}

/// Residual attention across the frame axis.
///
/// `x` is `[B * frames, L, C]` (frames of one clip contiguous). Each
/// spatial location attends over its `frames` values, after layer norm and
/// a sinusoidal frame encoding. The output projection starts at zero, so
/// at initialization this returns `x` unchanged.
pub fn motion_attention<T: Element>(
    p: &Params<T>,
    name: &str,
    x: &Tensor<T>,
    frames: usize,
    heads: usize,
    frame_encoding: bool,
) -> Tensor<T> {
    let &[bn, l, c] = x.shape() else {
        panic!("motion attention expects [B*n, L, C], got {:?}", x.shape());
    };
    assert_eq!(bn % frames, 0, "batch {bn} is not a multiple of {frames} frames");
    let b = bn / frames;
    let seq = x.reshape(&[b, frames, l, c]).permute(&[0, 2, 1, 3]).reshape(&[b * l, frames, c]);
    let mut h = layer_norm(p, &format!("{name}.norm"), &seq);
    if frame_encoding {
        let pos: Vec<f64> = (0..frames).map(|f| f as f64).collect();
        h = h.add_trailing(&sinusoidal::<T>(&pos, c));
    }
    let q = linear(p, &format!("{name}.q"), &h);
    let k = linear(p, &format!("{name}.k"), &h);
    let v = linear(p, &format!("{name}.v"), &h);
    let out = linear(p, &format!("{name}.out"), &multihead_attention(&q, &k, &v, heads));
    let out = out.reshape(&[b, l, frames, c]).permute(&[0, 2, 1, 3]).reshape(&[bn, l, c]);
    x.add(&out)
}

/// Parameters of a motion module of width `c`.
pub fn motion_specs(s: &mut SpecSink, name: &str, c: usize) {
    s.norm(&format!("{name}.norm"), c);
    qkv_specs(s, name, c, c);
    s.linear_zero(&format!("{name}.out"), c, c);
}

/// Per-call inputs of a transformer site. `bank` and `ctx` are already
/// expanded to one entry per frame.
pub struct SiteInputs<'a, T: Element> {
    pub bank: Option<&'a Tensor<T>>,
    pub ctx: &'a Tensor<T>,
    /// `(frames, motion parameter prefix)`; `None` skips the motion module.
    pub motion: Option<(usize, &'a str)>,
}

/// Attention site of width `c`: spatial attention, cross-attention,
/// feed-forward, then (optionally) motion attention, each residual.
pub struct TransformerSite {
    pub c: usize,
    pub ctx_dim: usize,
    pub heads: usize,
}

impl TransformerSite {
    pub fn specs(&self, s: &mut SpecSink, name: &str) {
        let c = self.c;
        s.norm(&format!("{name}.norm1"), c);
        qkv_specs(s, &format!("{name}.spatial"), c, c);
        s.linear(&format!("{name}.spatial.out"), c, c, true);
        s.norm(&format!("{name}.norm2"), c);
        qkv_specs(s, &format!("{name}.cross"), c, self.ctx_dim);
        s.linear(&format!("{name}.cross.out"), c, c, true);
        s.norm(&format!("{name}.norm3"), c);
        s.linear(&format!("{name}.ff1"), c, 2 * c, true);
        s.linear(&format!("{name}.ff2"), 2 * c, c, true);
    }

    /// Returns the output and the normalized tokens the spatial attention
    /// read, `[N, L, C]`, which is what a ReferenceNet contributes to the
    /// feature bank.
    pub fn forward<T: Element>(&self, p: &Params<T>, name: &str, x: &Tensor<T>, inputs: &SiteInputs<'_, T>) -> (Tensor<T>, Tensor<T>) {
        let (h, w) = (x.dim(2), x.dim(3));
        let mut t = to_tokens(x);
        let n1 = layer_norm(p, &format!("{name}.norm1"), &t);
        t = t.add(&spatial_attention(p, &format!("{name}.spatial"), &n1, inputs.bank, self.heads));
        let n2 = layer_norm(p, &format!("{name}.norm2"), &t);
        t = t.add(&cross_attention(p, &format!("{name}.cross"), &n2, inputs.ctx, self.heads));
        let n3 = layer_norm(p, &format!("{name}.norm3"), &t);
        let ff = linear(p, &format!("{name}.ff2"), &linear(p, &format!("{name}.ff1"), &n3).silu());
        t = t.add(&ff);
        if let Some((frames, motion)) = inputs.motion {
            t = motion_attention(p, motion, &t, frames, self.heads, true);
        }
        (from_tokens(&t, h, w), n1)
    }
}
