//! The denoising UNet. The ReferenceNet shares its topology with separate
//! parameters and runs only to collect feature-bank entries.

use super::attention::{motion_specs, SiteInputs, TransformerSite};
use super::layers::{conv, group_norm, linear, sinusoidal, ResBlock};
use super::params::{Params, SpecSink};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const DENOISER: &str = "denoiser";
pub const REFERENCENET: &str = "referencenet";
pub const MOTION: &str = "motion";

/// One attention site in forward order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Site {
    /// Path below the network prefix, e.g. `down.2.attn`.
    pub path: String,
    pub level: usize,
    pub width: usize,
    pub tokens: usize,
}

/// Static structure of the UNet derived from a config.
#[derive(Clone, Debug)]
pub struct UNetLayout {
    pub channels: Vec<usize>,
    pub attention: Vec<bool>,
    pub latent_channels: usize,
    pub temb: usize,
    pub heads: usize,
    pub groups: usize,
    pub ctx_dim: usize,
    pub sites: Vec<Site>,
}

impl UNetLayout {
    pub fn new(cfg: &RunConfig) -> Self {
        let m = &cfg.model;
        let levels = m.unet_channels.len();
        let attention: Vec<bool> = (0..levels).map(|l| m.attention_levels.contains(&l)).collect();
        let site = |path: String, level: usize| {
            let (h, w) = cfg.level_hw(level);
            Site { path, level, width: m.unet_channels[level], tokens: h * w }
        };
        let mut sites = Vec::new();
        for l in 0..levels {
            if attention[l] {
                sites.push(site(format!("down.{l}.attn"), l));
            }
        }
        if attention[levels - 1] {
            sites.push(site("mid.attn".into(), levels - 1));
        }
        for l in (0..levels).rev() {
            if attention[l] {
                sites.push(site(format!("up.{l}.attn"), l));
            }
        }
        UNetLayout {
            channels: m.unet_channels.clone(),
            attention,
            latent_channels: cfg.latent_channels(),
            temb: 4 * m.unet_channels[0],
            heads: m.attention_heads,
            groups: m.norm_groups,
            ctx_dim: m.context_dim,
            sites,
        }
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    fn site(&self, level: usize) -> TransformerSite {
        TransformerSite { c: self.channels[level], ctx_dim: self.ctx_dim, heads: self.heads }
    }

    fn res(&self, cin: usize, cout: usize) -> ResBlock {
        ResBlock { cin, cout, temb: self.temb }
    }

    /// Parameters of one UNet under `net`.
    pub fn specs(&self, s: &mut SpecSink, net: &str) {
        let c = &self.channels;
        let last = self.levels() - 1;
        s.linear(&format!("{net}.time.lin1"), c[0], self.temb, true);
        s.linear(&format!("{net}.time.lin2"), self.temb, self.temb, true);
        s.conv(&format!("{net}.conv_in"), self.latent_channels, c[0], 3);
        for l in 0..self.levels() {
            let cin = if l == 0 { c[0] } else { c[l - 1] };
            self.res(cin, c[l]).specs(s, &format!("{net}.down.{l}.res"));
            if self.attention[l] {
                self.site(l).specs(s, &format!("{net}.down.{l}.attn"));
            }
            if l < last {
                s.conv(&format!("{net}.down.{l}.downsample"), c[l], c[l], 3);
            }
        }
        self.res(c[last], c[last]).specs(s, &format!("{net}.mid.res1"));
        if self.attention[last] {
            self.site(last).specs(s, &format!("{net}.mid.attn"));
        }
        self.res(c[last], c[last]).specs(s, &format!("{net}.mid.res2"));
        for l in (0..self.levels()).rev() {
            self.res(2 * c[l], c[l]).specs(s, &format!("{net}.up.{l}.res"));
            if self.attention[l] {
                self.site(l).specs(s, &format!("{net}.up.{l}.attn"));
            }
            if l > 0 {
                s.conv(&format!("{net}.up.{l}.upsample"), c[l], c[l - 1], 3);
            }
        }
        s.norm(&format!("{net}.out.norm"), c[0]);
        s.conv(&format!("{net}.out.conv"), c[0], self.latent_channels, 3);
    }

    pub fn motion_specs(&self, s: &mut SpecSink) {
        for site in &self.sites {
            motion_specs(s, &format!("{MOTION}.{}", site.path), site.width);
        }
    }
}

/// Reference features, one `[B, L, C]` tensor per attention site in
/// forward order.
#[derive(Clone, Debug)]
pub struct FeatureBank<T: Element> {
    pub entries: Vec<Tensor<T>>,
}

impl<T: Element> FeatureBank<T> {
    /// Checks entry count and shapes against `layout`.
    pub fn check(&self, layout: &UNetLayout) -> Result<()> {
        if self.entries.len() != layout.sites.len() {
            return Err(Error::Shape(format!(
                "feature bank has {} entries, the UNet has {} attention sites",
                self.entries.len(),
                layout.sites.len()
            )));
        }
        for (e, s) in self.entries.iter().zip(&layout.sites) {
            if e.ndim() != 3 || e.dim(1) != s.tokens || e.dim(2) != s.width {
                return Err(Error::Shape(format!(
                    "bank entry for {} has shape {:?}, expected [B, {}, {}]",
                    s.path,
                    e.shape(),
                    s.tokens,
                    s.width
                )));
            }
        }
        Ok(())
    }

    /// Repeats every entry `frames` times along the batch axis.
    pub fn repeat_frames(&self, frames: usize) -> Self {
        FeatureBank { entries: self.entries.iter().map(|e| repeat_frames(e, frames)).collect() }
    }
}

/// `[B, ...]` to `[B * frames, ...]`, each item repeated `frames` times in
/// a row.
pub fn repeat_frames<T: Element>(x: &Tensor<T>, frames: usize) -> Tensor<T> {
    if frames == 1 {
        return x.clone();
    }
    let idx: Vec<usize> = (0..x.dim(0)).flat_map(|b| std::iter::repeat_n(b, frames)).collect();
    x.index_select0(&idx)
}

/// Inputs of one UNet evaluation over `N` images.
pub struct UNetInputs<'a, T: Element> {
    /// `[N, C, h, w]`.
    pub z: &'a Tensor<T>,
    /// One timestep per image.
    pub timesteps: &'a [f64],
    /// `[N, K, D]`.
    pub ctx: &'a Tensor<T>,
    /// Entries of shape `[N, L, C]`.
    pub bank: Option<&'a FeatureBank<T>>,
    /// Clip length when the motion module is active; `N` must be a multiple.
    pub motion_frames: Option<usize>,
}

/// Runs the UNet under `net`. With `capture_only`, evaluation stops after
/// the last attention site and only the captured site inputs are returned.
fn run<T: Element>(layout: &UNetLayout, p: &Params<T>, net: &str, inp: &UNetInputs<'_, T>, capture_only: bool) -> (Option<Tensor<T>>, Vec<Tensor<T>>) {
    let c0 = layout.channels[0];
    let last = layout.levels() - 1;
    let temb = sinusoidal::<T>(inp.timesteps, c0);
    let temb = linear(p, &format!("{net}.time.lin2"), &linear(p, &format!("{net}.time.lin1"), &temb).silu());
    let temb_act = temb.silu();
    let mut captured = Vec::new();
    let mut site_index = 0;
    let mut site = |level: usize, path: &str, h: &Tensor<T>, captured: &mut Vec<Tensor<T>>| {
        let motion_name = format!("{MOTION}.{path}");
        let inputs = SiteInputs {
            bank: inp.bank.map(|b| &b.entries[site_index]),
            ctx: inp.ctx,
            motion: inp.motion_frames.map(|f| (f, motion_name.as_str())),
        };
        site_index += 1;
        let (out, n1) = layout.site(level).forward(p, &format!("{net}.{path}"), h, &inputs);
        captured.push(n1);
        out
    };
    let n_sites = layout.sites.len();

    let mut h = conv(p, &format!("{net}.conv_in"), inp.z, 1);
    let mut skips = Vec::with_capacity(layout.levels());
    for l in 0..layout.levels() {
        let cin = if l == 0 { c0 } else { layout.channels[l - 1] };
        h = layout.res(cin, layout.channels[l]).forward(p, &format!("{net}.down.{l}.res"), &h, &temb_act, layout.groups);
        if layout.attention[l] {
            h = site(l, &format!("down.{l}.attn"), &h, &mut captured);
        }
        skips.push(h.clone());
        if l < last {
            h = conv(p, &format!("{net}.down.{l}.downsample"), &h, 2);
        }
    }
    let cl = layout.channels[last];
    h = layout.res(cl, cl).forward(p, &format!("{net}.mid.res1"), &h, &temb_act, layout.groups);
    if layout.attention[last] {
        h = site(last, "mid.attn", &h, &mut captured);
    }
    h = layout.res(cl, cl).forward(p, &format!("{net}.mid.res2"), &h, &temb_act, layout.groups);
    for l in (0..layout.levels()).rev() {
        if capture_only && captured.len() == n_sites {
            return (None, captured);
        }
        let cat = Tensor::concat(&[&h, &skips[l]], 1);
        h = layout.res(2 * layout.channels[l], layout.channels[l]).forward(p, &format!("{net}.up.{l}.res"), &cat, &temb_act, layout.groups);
        if layout.attention[l] {
            h = site(l, &format!("up.{l}.attn"), &h, &mut captured);
        }
        if l > 0 {
            h = conv(p, &format!("{net}.up.{l}.upsample"), &h.upsample_nearest2x(), 1);
        }
    }
    if capture_only {
        return (None, captured);
    }
    let out = conv(p, &format!("{net}.out.conv"), &group_norm(p, &format!("{net}.out.norm"), &h, layout.groups).silu(), 1);
    (Some(out), captured)
}

/// Denoiser forward: predicted noise `[N, C, h, w]`.
pub fn unet_forward<T: Element>(layout: &UNetLayout, p: &Params<T>, inp: &UNetInputs<'_, T>) -> Tensor<T> {
    if let Some(b) = inp.bank {
        b.check(layout).expect("feature bank matches the UNet layout");
    }
    run(layout, p, DENOISER, inp, false).0.expect("full pass yields an output")
}

/// ReferenceNet forward on the clean reference latent `[B, C, h, w]` at
/// timestep 0; returns the per-site bank.
pub fn reference_features<T: Element>(layout: &UNetLayout, p: &Params<T>, z_ref: &Tensor<T>, ctx: &Tensor<T>) -> FeatureBank<T> {
    let t = vec![0.0; z_ref.dim(0)];
    let inp = UNetInputs { z: z_ref, timesteps: &t, ctx, bank: None, motion_frames: None };
    FeatureBank { entries: run(layout, p, REFERENCENET, &inp, true).1 }
}
