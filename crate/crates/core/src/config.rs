//! Run configuration: a versioned TOML document.
//!
//! ```toml
//! schema_version = 1
//! seed = 42
//!
//! [canvas]
//! height = 64
//! width = 64
//!
//! [model]
//! latent_downsample = 1      # 1 = identity codec (pixel-space diffusion), 2 or 4 = conv autoencoder
//! latent_channels = 4        # conv codec only; the identity codec always has 3
//! codec_channels = 16
//! unet_channels = [16, 32, 64]
//! attention_levels = [2]
//! attention_heads = 2
//! norm_groups = 8
//! context_dim = 64
//! context_tokens = 1
//! pose_guider_channels = [8, 8, 16, 16]
//! embedder_channels = [16, 32, 64]
//! pose_thickness = 2
//!
//! [diffusion]
//! steps = 1000
//! beta_start = 0.0001
//! beta_end = 0.02
//! sampler_steps = 50
//! eta = 0.0
//!
//! [training]
//! frames_per_clip = 4
//! batch_size = 4
//! stage1_steps = 5000
//! stage2_steps = 1000
//! lr_stage1 = 0.001
//! lr_stage2 = 0.0002
//! checkpoint_every = 1000
//! recon_weight = 1.0
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The shipped default configuration file.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../configs/default.toml");

/// A 16x16 configuration with the conv codec, used for fast checks.
pub const MICRO_CONFIG_TOML: &str = include_str!("../configs/micro.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub canvas: Canvas,
    pub model: ModelConfig,
    pub diffusion: DiffusionConfig,
    pub training: TrainingConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_downsample: usize,
    pub latent_channels: usize,
    pub codec_channels: usize,
    pub unet_channels: Vec<usize>,
    pub attention_levels: BTreeSet<usize>,
    pub attention_heads: usize,
    pub norm_groups: usize,
    pub context_dim: usize,
    pub context_tokens: usize,
    pub pose_guider_channels: Vec<usize>,
    pub embedder_channels: Vec<usize>,
    pub pose_thickness: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    /// Number of diffusion timesteps T.
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sampler_steps: usize,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub frames_per_clip: usize,
    pub batch_size: usize,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub checkpoint_every: usize,
    /// Weight of the codec reconstruction term; ignored by the identity codec.
    pub recon_weight: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("shipped default config is valid")
    }
}

fn check(ok: bool, invariant: &'static str, detail: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invariant(invariant, detail()))
    }
}

impl RunConfig {
    pub fn micro() -> Self {
        Self::from_toml_str(MICRO_CONFIG_TOML).expect("shipped micro config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            what: "run config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_toml_string().as_bytes())[..])
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let d = &self.diffusion;
        let t = &self.training;
        check(self.schema_version == CONFIG_SCHEMA_VERSION, "schema_version", || {
            format!("found {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version)
        })?;
        check(self.canvas.height > 0 && self.canvas.width > 0, "canvas_nonempty", || {
            format!("{}x{}", self.canvas.height, self.canvas.width)
        })?;
        check([1, 2, 4].contains(&m.latent_downsample), "latent_downsample_in_1_2_4", || {
            format!("latent_downsample = {}", m.latent_downsample)
        })?;
        check(!m.unet_channels.is_empty(), "unet_channels_nonempty", String::new)?;
        let factor = self.total_downsample();
        check(
            self.canvas.height % factor == 0 && self.canvas.width % factor == 0,
            "canvas_divisible_by_downsample",
            || {
                format!(
                    "canvas {}x{} not divisible by latent_downsample x 2^(levels-1) = {factor}",
                    self.canvas.height, self.canvas.width
                )
            },
        )?;
        check(m.latent_downsample == 1 || m.latent_channels > 0, "latent_channels_positive", String::new)?;
        check(m.codec_channels > 0, "codec_channels_positive", String::new)?;
        check(m.norm_groups > 0, "norm_groups_positive", String::new)?;
        for &c in &m.unet_channels {
            check(c > 0 && c % m.norm_groups == 0, "unet_channels_divisible_by_norm_groups", || {
                format!("channel width {c} vs norm_groups {}", m.norm_groups)
            })?;
        }
        check(!m.attention_levels.is_empty(), "attention_levels_nonempty", String::new)?;
        for &l in &m.attention_levels {
            check(l < m.unet_channels.len(), "attention_level_in_range", || {
                format!("level {l} but only {} levels", m.unet_channels.len())
            })?;
            check(
                m.attention_heads > 0 && m.unet_channels[l] % m.attention_heads == 0,
                "attention_width_divisible_by_heads",
                || format!("width {} vs {} heads", m.unet_channels[l], m.attention_heads),
            )?;
        }
        check(m.context_dim > 0 && m.context_tokens > 0, "context_shape_positive", String::new)?;
        check(m.pose_guider_channels.len() == 4, "pose_guider_has_four_convs", || {
            format!("{} channel entries", m.pose_guider_channels.len())
        })?;
        check(m.pose_guider_channels.iter().all(|&c| c > 0), "pose_guider_channels_positive", String::new)?;
        check(
            !m.embedder_channels.is_empty() && m.embedder_channels.iter().all(|&c| c > 0),
            "embedder_channels_nonempty",
            String::new,
        )?;
        check(m.pose_thickness >= 1, "pose_thickness_positive", String::new)?;
        check(d.steps >= 1, "diffusion_steps_positive", String::new)?;
        check(
            0.0 < d.beta_start && d.beta_start <= d.beta_end && d.beta_end < 1.0,
            "beta_bounds",
            || format!("require 0 < beta_start <= beta_end < 1, got {} / {}", d.beta_start, d.beta_end),
        )?;
        check(d.steps >= d.sampler_steps && d.sampler_steps >= 1, "steps_ge_sampler_steps_ge_1", || {
            format!("T = {}, sampler_steps = {}", d.steps, d.sampler_steps)
        })?;
        check((0.0..=1.0).contains(&d.eta), "eta_in_unit_interval", || format!("eta = {}", d.eta))?;
        check(t.frames_per_clip >= 1, "frames_per_clip_positive", String::new)?;
        check(t.batch_size >= 1, "batch_size_positive", String::new)?;
        check(t.lr_stage1 > 0.0 && t.lr_stage2 > 0.0, "learning_rates_positive", String::new)?;
        check(t.checkpoint_every >= 1, "checkpoint_every_positive", String::new)?;
        check(t.recon_weight >= 0.0, "recon_weight_nonnegative", String::new)?;
        Ok(())
    }

    /// `latent_downsample * 2^(levels - 1)`.
    pub fn total_downsample(&self) -> usize {
        self.model.latent_downsample << (self.model.unet_channels.len().saturating_sub(1))
    }

    pub fn uses_identity_codec(&self) -> bool {
        self.model.latent_downsample == 1
    }

    /// Channels of the diffusion latent.
    pub fn latent_channels(&self) -> usize {
        if self.uses_identity_codec() {
            3
        } else {
            self.model.latent_channels
        }
    }

    /// `(h, w)` of the diffusion latent.
    pub fn latent_hw(&self) -> (usize, usize) {
        (
            self.canvas.height / self.model.latent_downsample,
            self.canvas.width / self.model.latent_downsample,
        )
    }

    /// `(h, w)` of UNet level `level`.
    pub fn level_hw(&self, level: usize) -> (usize, usize) {
        let (h, w) = self.latent_hw();
        (h >> level, w >> level)
    }

    pub fn num_levels(&self) -> usize {
        self.model.unet_channels.len()
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_default_is_64_square_with_t1000() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.canvas.height, cfg.canvas.width), (64, 64));
        assert_eq!(cfg.diffusion.steps, 1000);
        assert_eq!(cfg.diffusion.sampler_steps, 50);
        assert_eq!(cfg.diffusion.eta, 0.0);
        assert_eq!(cfg.training.frames_per_clip, 4);
    }

    #[test]
    fn indivisible_canvas_names_the_invariant() {
        let mut cfg = RunConfig::default();
        cfg.canvas.height = 60;
        cfg.model.latent_downsample = 4;
        cfg.model.unet_channels = vec![16, 32, 64];
        let err = cfg.validate().unwrap_err();
        assert!(
            matches!(err, Error::Invariant { invariant: "canvas_divisible_by_downsample", .. }),
            "{err}"
        );
    }

    #[test]
    fn round_trip_is_a_fixpoint() {
        for cfg in [RunConfig::default(), RunConfig::micro()] {
            let text = cfg.to_toml_string();
            let again = RunConfig::from_toml_str(&text).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(text, again.to_toml_string());
        }
    }

    #[test]
    fn sampler_steps_cannot_exceed_t() {
        let mut cfg = RunConfig::default();
        cfg.diffusion.steps = 10;
        cfg.diffusion.sampler_steps = 11;
        assert!(matches!(
            cfg.validate(),
            Err(Error::Invariant { invariant: "steps_ge_sampler_steps_ge_1", .. })
        ));
    }

    #[test]
    fn unknown_keys_and_bad_schema_rejected() {
        let text = DEFAULT_CONFIG_TOML.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(
            RunConfig::from_toml_str(&text),
            Err(Error::Invariant { invariant: "schema_version", .. })
        ));
        let text = format!("{DEFAULT_CONFIG_TOML}\nbogus = 1\n");
        assert!(matches!(RunConfig::from_toml_str(&text), Err(Error::Parse { .. })));
    }
}
