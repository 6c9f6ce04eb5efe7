//! Networks: the denoising UNet and its ReferenceNet twin, the pose
//! guider, the motion modules, the image embedder and the latent codec.
//!
//! Forward passes are free functions over a [`Params`] map, so the same
//! code runs in `f32` for training and `f64` for numerical checks.

pub mod archive;
pub mod attention;
pub mod images;
pub mod layers;
pub mod modules;
pub mod params;
pub mod unet;

pub use archive::{ArchiveMeta, OptimizerState, ParamTensor, ParameterArchive};
pub use params::{Group, Init, ParamSpec, Params, SpecSink};
pub use unet::{FeatureBank, UNetInputs, UNetLayout};

use crate::config::RunConfig;
use crate::diffusion::NoiseSchedule;
use crate::tensor::{Element, Tensor};

/// Every parameter the config declares, grouped by prefix.
pub fn param_specs(cfg: &RunConfig) -> Vec<ParamSpec> {
    let layout = UNetLayout::new(cfg);
    let mut s = SpecSink::default();
    layout.specs(&mut s, unet::DENOISER);
    layout.specs(&mut s, unet::REFERENCENET);
    layout.motion_specs(&mut s);
    modules::pose_guider_specs(cfg, &mut s);
    modules::embedder_specs(cfg, &mut s);
    modules::codec_specs(cfg, &mut s);
    s.specs
}

/// Reference-derived conditioning, one entry per sequence.
#[derive(Clone, Debug)]
pub struct Conditioning<T: Element> {
    /// `[B, K, D]`.
    pub ctx: Tensor<T>,
    pub bank: FeatureBank<T>,
}

/// A config, its UNet layout and a parameter set.
pub struct Model<'a, T: Element> {
    pub cfg: &'a RunConfig,
    pub layout: UNetLayout,
    pub params: Params<T>,
    schedule: NoiseSchedule,
}

impl<'a, T: Element> Model<'a, T> {
    /// `cfg` must be valid (see [`RunConfig::validate`]).
    pub fn new(cfg: &'a RunConfig, params: Params<T>) -> Self {
        let schedule = NoiseSchedule::from_config(&cfg.diffusion).expect("validated config has a valid schedule");
        Model { cfg, layout: UNetLayout::new(cfg), params, schedule }
    }

    pub fn encode(&self, x: &Tensor<T>) -> Tensor<T> {
        modules::encode(self.cfg, &self.params, x)
    }

    pub fn decode(&self, z: &Tensor<T>) -> Tensor<T> {
        modules::decode(self.cfg, &self.params, z)
    }

    /// Reference image `[B, 3, H, W]` in network range to context tokens
    /// and a feature bank from the ReferenceNet on its clean latent.
    pub fn condition(&self, reference: &Tensor<T>) -> Conditioning<T> {
        let ctx = modules::embed_image(self.cfg, &self.params, reference);
        let z_ref = self.encode(reference);
        let bank = unet::reference_features(&self.layout, &self.params, &z_ref, &ctx);
        Conditioning { ctx, bank }
    }

    /// Pose images `[N, 3, H, W]` to latent residuals.
    pub fn pose_residual(&self, pose: &Tensor<T>) -> Tensor<T> {
        modules::pose_guider(self.cfg, &self.params, pose)
    }

    /// Predicted noise for `z_t` `[B * frames, C, h, w]`, where item `b`'s
    /// frames share `cond` entry `b`. The pose residual is added to the
    /// noisy latent before the first conv.
    ///
    /// The UNet output `F` is combined with the input as
    /// `eps = sqrt(1 - a) * z_t + sqrt(a) * F` (`a = alpha_bar_t`), so at
    /// high noise the prediction defaults to the input itself and the
    /// implied `x0 = sqrt(a) * z_t - sqrt(1 - a) * F` stays bounded.
    pub fn predict_noise(
        &self,
        z_t: &Tensor<T>,
        timesteps: &[usize],
        cond: &Conditioning<T>,
        pose_residual: Option<&Tensor<T>>,
        frames: usize,
        motion: bool,
    ) -> Tensor<T> {
        let z = match pose_residual {
            Some(r) => z_t.add(r),
            None => z_t.clone(),
        };
        let ctx = unet::repeat_frames(&cond.ctx, frames);
        let bank = cond.bank.repeat_frames(frames);
        let t: Vec<f64> = timesteps.iter().map(|&t| t as f64).collect();
        let inp = UNetInputs {
            z: &z,
            timesteps: &t,
            ctx: &ctx,
            bank: Some(&bank),
            motion_frames: motion.then_some(frames),
        };
        let f = unet::unet_forward(&self.layout, &self.params, &inp);
        let per = z_t.numel() / z_t.dim(0);
        let (mut skip, mut gain) = (Vec::with_capacity(z_t.numel()), Vec::with_capacity(z_t.numel()));
        for &ti in timesteps {
            let a = self.schedule.alpha_bar(ti as isize);
            skip.extend(std::iter::repeat_n((1.0 - a).sqrt(), per));
            gain.extend(std::iter::repeat_n(a.sqrt(), per));
        }
        let skip = Tensor::<T>::from_f64_slice(&skip, z_t.shape()).mul(&z_t.detach());
        skip.add(&f.mul(&Tensor::from_f64_slice(&gain, z_t.shape())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::testing::pseudo_random;

    fn f64_model(cfg: &RunConfig, seed: u64) -> Model<'_, f64> {
        Model::new(cfg, ParameterArchive::init(cfg, seed).to_params(&[]))
    }

    fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
        Tensor::from_vec(pseudo_random(shape.iter().product(), seed), shape)
    }

    #[test]
    fn pose_guider_is_a_no_op_at_init() {
        for cfg in [RunConfig::micro(), RunConfig::default()] {
            let m = f64_model(&cfg, 2);
            let (h, w) = cfg.latent_hw();
            let z = randn(&[2, cfg.latent_channels(), h, w], 1);
            let pose = randn(&[2, 3, cfg.canvas.height, cfg.canvas.width], 3);
            let r = m.pose_residual(&pose);
            assert_eq!(r.shape(), z.shape());
            assert_eq!(z.add(&r).data(), z.data());
        }
    }

    #[test]
    fn motion_module_is_a_no_op_at_init() {
        let cfg = RunConfig::micro();
        let m = f64_model(&cfg, 4);
        let (h, w) = cfg.latent_hw();
        let frames = 3;
        let reference = randn(&[1, 3, 16, 16], 5);
        let cond = m.condition(&reference);
        let z = randn(&[frames, cfg.latent_channels(), h, w], 6);
        let t = [10, 50, 90];
        let with = m.predict_noise(&z, &t, &cond, None, frames, true);
        let without = m.predict_noise(&z, &t, &cond, None, frames, false);
        assert!(with.max_abs_diff(&without) <= 1e-7);
        assert_eq!(with.data(), without.data());
    }

    #[test]
    fn bank_matches_layout_and_output_has_latent_shape() {
        let cfg = RunConfig::micro();
        let m = f64_model(&cfg, 4);
        let cond = m.condition(&randn(&[2, 3, 16, 16], 1));
        cond.bank.check(&m.layout).unwrap();
        assert_eq!(cond.ctx.shape(), &[2, cfg.model.context_tokens, cfg.model.context_dim]);
        let z = randn(&[4, 4, 8, 8], 2);
        let eps = m.predict_noise(&z, &[1, 2, 3, 4], &cond, None, 2, true);
        assert_eq!(eps.shape(), z.shape());
        assert!(eps.all_finite());
    }

    #[test]
    fn identity_codec_round_trips_exactly() {
        let cfg = RunConfig::default();
        let m = f64_model(&cfg, 1);
        let x = randn(&[1, 3, 64, 64], 9);
        assert_eq!(m.decode(&m.encode(&x)).data(), x.data());
        assert!(param_specs(&cfg).iter().all(|s| !s.name.starts_with("codec.")));
    }

    #[test]
    fn conv_codec_shapes() {
        let cfg = RunConfig::micro();
        let m = f64_model(&cfg, 1);
        let z = m.encode(&randn(&[2, 3, 16, 16], 9));
        assert_eq!(z.shape(), &[2, 4, 8, 8]);
        assert_eq!(m.decode(&z).shape(), &[2, 3, 16, 16]);
    }

    /// Closed-form parameter count, written out layer by layer
    /// independently of the declaration code.
    fn expected_count(cfg: &RunConfig) -> usize {
        let md = &cfg.model;
        let c = &md.unet_channels;
        let lat = cfg.latent_channels();
        let te = 4 * c[0];
        let conv = |i: usize, o: usize, k: usize| o * i * k * k + o;
        let lin = |i: usize, o: usize| o * i + o;
        let res = |i: usize, o: usize| 2 * i + conv(i, o, 3) + lin(te, o) + 2 * o + conv(o, o, 3) + if i != o { conv(i, o, 1) } else { 0 };
        let site = |w: usize| 3 * 2 * w + 3 * w * w + lin(w, w) + w * w + 2 * w * md.context_dim + lin(w, w) + lin(w, 2 * w) + lin(2 * w, w);
        let motion = |w: usize| 2 * w + 3 * w * w + lin(w, w);
        let n = c.len();
        let attn = |l: usize| md.attention_levels.contains(&l);
        let mut unet = lin(c[0], te) + lin(te, te) + conv(lat, c[0], 3) + 2 * c[0] + conv(c[0], lat, 3);
        let mut mot = 0;
        for l in 0..n {
            unet += res(if l == 0 { c[0] } else { c[l - 1] }, c[l]) + res(2 * c[l], c[l]);
            if attn(l) {
                unet += 2 * site(c[l]);
                mot += 2 * motion(c[l]);
            }
            if l + 1 < n {
                unet += conv(c[l], c[l], 3) + conv(c[l + 1], c[l], 3);
            }
        }
        unet += 2 * res(c[n - 1], c[n - 1]);
        if attn(n - 1) {
            unet += site(c[n - 1]);
            mot += motion(c[n - 1]);
        }
        let pg = &md.pose_guider_channels;
        let pose = conv(3, pg[0], 3) + conv(pg[0], pg[1], 3) + conv(pg[1], pg[2], 3) + conv(pg[2], pg[3], 3) + conv(pg[3], lat, 1);
        let mut emb = 0;
        let mut cin = 3;
        for &e in &md.embedder_channels {
            emb += conv(cin, e, 3);
            cin = e;
        }
        emb += lin(cin, md.context_tokens * md.context_dim);
        let codec = if cfg.uses_identity_codec() {
            0
        } else {
            let cc = md.codec_channels;
            let k = md.latent_downsample.trailing_zeros() as usize;
            conv(3, cc, 3) + k * conv(cc, cc, 3) + conv(cc, lat, 3) + conv(lat, cc, 3) + k * conv(cc, cc, 3) + conv(cc, 3, 3)
        };
        2 * unet + mot + pose + emb + codec
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for cfg in [RunConfig::micro(), RunConfig::default()] {
            let a = ParameterArchive::init(&cfg, 0);
            assert_eq!(a.num_params(), expected_count(&cfg));
            assert_eq!(a.group_params(Group::Denoiser), a.group_params(Group::Referencenet));
        }
    }
}
