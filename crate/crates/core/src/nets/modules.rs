//! Pose guider, image embedder and latent codec.

use super::layers::{conv, linear};
use super::params::{Params, SpecSink};
use crate::config::RunConfig;
use crate::tensor::{Element, Tensor};

pub const POSE_GUIDER: &str = "pose_guider";
pub const EMBEDDER: &str = "embedder";
pub const CODEC: &str = "codec";

fn stride_2_count(latent_downsample: usize) -> usize {
    latent_downsample.trailing_zeros() as usize
}

pub fn pose_guider_specs(cfg: &RunConfig, s: &mut SpecSink) {
    let mut cin = 3;
    for (i, &c) in cfg.model.pose_guider_channels.iter().enumerate() {
        s.conv(&format!("{POSE_GUIDER}.conv{i}"), cin, c, 3);
        cin = c;
    }
    s.conv_zero(&format!("{POSE_GUIDER}.proj"), cin, cfg.latent_channels(), 1);
}

/// Pose image `[N, 3, H, W]` to a latent-shaped residual `[N, C, h, w]`.
/// The first `log2(latent_downsample)` convs have stride 2; the final
/// 1x1 projection starts at zero.
pub fn pose_guider<T: Element>(cfg: &RunConfig, p: &Params<T>, pose: &Tensor<T>) -> Tensor<T> {
    let strided = stride_2_count(cfg.model.latent_downsample);
    let mut h = pose.clone();
    for i in 0..cfg.model.pose_guider_channels.len() {
        let stride = if i < strided { 2 } else { 1 };
        h = conv(p, &format!("{POSE_GUIDER}.conv{i}"), &h, stride).silu();
    }
    conv(p, &format!("{POSE_GUIDER}.proj"), &h, 1)
}

pub fn embedder_specs(cfg: &RunConfig, s: &mut SpecSink) {
    let mut cin = 3;
    for (i, &c) in cfg.model.embedder_channels.iter().enumerate() {
        s.conv(&format!("{EMBEDDER}.conv{i}"), cin, c, 3);
        cin = c;
    }
    let m = &cfg.model;
    s.linear(&format!("{EMBEDDER}.proj"), cin, m.context_tokens * m.context_dim, true);
}

/// Reference image `[N, 3, H, W]` to context tokens `[N, K, D]`.
pub fn embed_image<T: Element>(cfg: &RunConfig, p: &Params<T>, image: &Tensor<T>) -> Tensor<T> {
    let mut h = image.clone();
    for i in 0..cfg.model.embedder_channels.len() {
        h = conv(p, &format!("{EMBEDDER}.conv{i}"), &h, 2).silu();
    }
    let pooled = h.mean_spatial();
    let n = pooled.dim(0);
    linear(p, &format!("{EMBEDDER}.proj"), &pooled).reshape(&[n, cfg.model.context_tokens, cfg.model.context_dim])
}

/// The identity codec has no parameters.
pub fn codec_specs(cfg: &RunConfig, s: &mut SpecSink) {
    if cfg.uses_identity_codec() {
        return;
    }
    let cc = cfg.model.codec_channels;
    let lat = cfg.latent_channels();
    s.conv(&format!("{CODEC}.enc.in"), 3, cc, 3);
    for i in 0..stride_2_count(cfg.model.latent_downsample) {
        s.conv(&format!("{CODEC}.enc.down{i}"), cc, cc, 3);
    }
    s.conv(&format!("{CODEC}.enc.out"), cc, lat, 3);
    s.conv(&format!("{CODEC}.dec.in"), lat, cc, 3);
    for i in 0..stride_2_count(cfg.model.latent_downsample) {
        s.conv(&format!("{CODEC}.dec.up{i}"), cc, cc, 3);
    }
    s.conv(&format!("{CODEC}.dec.out"), cc, 3, 3);
}

/// Network-space image `[N, 3, H, W]` to latent `[N, C, H/f, W/f]`.
pub fn encode<T: Element>(cfg: &RunConfig, p: &Params<T>, x: &Tensor<T>) -> Tensor<T> {
    if cfg.uses_identity_codec() {
        return x.clone();
    }
    let mut h = conv(p, &format!("{CODEC}.enc.in"), x, 1).silu();
    for i in 0..stride_2_count(cfg.model.latent_downsample) {
        h = conv(p, &format!("{CODEC}.enc.down{i}"), &h, 2).silu();
    }
    conv(p, &format!("{CODEC}.enc.out"), &h, 1)
}

pub fn decode<T: Element>(cfg: &RunConfig, p: &Params<T>, z: &Tensor<T>) -> Tensor<T> {
    if cfg.uses_identity_codec() {
        return z.clone();
    }
    let mut h = conv(p, &format!("{CODEC}.dec.in"), z, 1).silu();
    for i in 0..stride_2_count(cfg.model.latent_downsample) {
        h = conv(p, &format!("{CODEC}.dec.up{i}"), &h.upsample_nearest2x(), 1).silu();
    }
    conv(p, &format!("{CODEC}.dec.out"), &h, 1)
}
