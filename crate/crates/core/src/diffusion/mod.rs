//! Forward noising, the epsilon-prediction training objective and DDIM
//! sampling.

pub mod schedule;

pub use schedule::{make_schedule, NoiseSchedule};

use rand::Rng;

use crate::nets::{Group, Model};
use crate::seed::{normal_vec, seed_all, STREAM_SAMPLE};
use crate::tensor::{Element, Tensor};

/// Training stage. Stage 1 learns appearance and pose from single
/// frames; stage 2 learns only the motion modules from clips.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }

    pub fn trainable(self) -> &'static [Group] {
        match self {
            Stage::One => &Group::STAGE1,
            Stage::Two => &[Group::Motion],
        }
    }
}

/// Network-range training inputs. Item `b` of `references` conditions
/// frames `b * frames .. (b + 1) * frames` of `poses` and `targets`.
pub struct Batch<T: Element> {
    /// `[B, 3, H, W]`.
    pub references: Tensor<T>,
    /// `[B * frames, 3, H, W]` rasterized skeletons.
    pub poses: Tensor<T>,
    /// `[B * frames, 3, H, W]`.
    pub targets: Tensor<T>,
    pub frames: usize,
}

impl<T: Element> Batch<T> {
    pub fn clips(&self) -> usize {
        self.references.dim(0)
    }
}

/// Random draws of one training step, fixed up front so the loss is a
/// deterministic function of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Draws {
    /// One timestep per clip, shared by its frames.
    pub timesteps: Vec<usize>,
    /// Standard-normal noise, one value per latent element.
    pub noise: Vec<f64>,
}

impl Draws {
    pub fn sample(rng: &mut impl Rng, clips: usize, frames: usize, latent_numel: usize, steps: usize) -> Self {
        let timesteps = (0..clips).map(|_| rng.random_range(0..steps)).collect();
        let noise = normal_vec(rng, clips * frames * latent_numel);
        Draws { timesteps, noise }
    }
}

/// The scalar objective plus its parts as plain numbers.
pub struct Loss<T: Element> {
    pub total: Tensor<T>,
    pub denoise: f64,
    pub recon: f64,
}

/// `mean ||eps - eps_hat||^2` over the batch, plus in stage 1 the
/// weighted codec reconstruction error when a conv codec is in use.
///
/// The diffusion target latent is detached: the codec learns from the
/// reconstruction term and from the reference path, never from making
/// the denoising problem easier.
pub fn training_loss<T: Element>(model: &Model<'_, T>, sched: &NoiseSchedule, batch: &Batch<T>, draws: &Draws, stage: Stage) -> Loss<T> {
    let z0_live = model.encode(&batch.targets);
    loss_parts(model, sched, batch, draws, stage, &z0_live.detach(), Some(z0_live))
}

/// [`training_loss`] with the diffusion target latent given as a
/// constant. For `z0 = encode(targets)` the value is identical, and its
/// gradient is what the detached objective differentiates, which makes it
/// the function to finite-difference when checking gradients.
pub fn training_loss_with_target_latent<T: Element>(
    model: &Model<'_, T>,
    sched: &NoiseSchedule,
    batch: &Batch<T>,
    draws: &Draws,
    stage: Stage,
    z0: &Tensor<T>,
) -> Loss<T> {
    loss_parts(model, sched, batch, draws, stage, &z0.detach(), None)
}

fn loss_parts<T: Element>(
    model: &Model<'_, T>,
    sched: &NoiseSchedule,
    batch: &Batch<T>,
    draws: &Draws,
    stage: Stage,
    z0: &Tensor<T>,
    z0_live: Option<Tensor<T>>,
) -> Loss<T> {
    let frames = batch.frames;
    let cond = model.condition(&batch.references);
    assert_eq!(draws.noise.len(), z0.numel(), "noise draws do not match latent size");
    assert_eq!(draws.timesteps.len(), batch.clips(), "one timestep per clip");

    let per_frame = z0.numel() / z0.dim(0);
    let z0v: Vec<f64> = z0.data().iter().map(|v| v.to_f64_lossless()).collect();
    let mut zt = Vec::with_capacity(z0v.len());
    let mut t_frames = Vec::with_capacity(z0.dim(0));
    for (f, chunk) in z0v.chunks(per_frame).enumerate() {
        let t = draws.timesteps[f / frames];
        t_frames.push(t);
        zt.extend(sched.q_sample(chunk, t as isize, &draws.noise[f * per_frame..(f + 1) * per_frame]));
    }
    let z_t = Tensor::<T>::from_f64_slice(&zt, z0.shape());
    let eps = Tensor::<T>::from_f64_slice(&draws.noise, z0.shape());
    let pose = model.pose_residual(&batch.poses);
    let eps_hat = model.predict_noise(&z_t, &t_frames, &cond, Some(&pose), frames, stage == Stage::Two);
    let denoise = eps_hat.mse(&eps);

    let w = model.cfg.training.recon_weight;
    if stage == Stage::One && !model.cfg.uses_identity_codec() && w > 0.0 {
        let z0_live = z0_live.unwrap_or_else(|| model.encode(&batch.targets));
        let recon = model.decode(&z0_live).mse(&batch.targets);
        let (d, r) = (denoise.item().to_f64_lossless(), recon.item().to_f64_lossless());
        Loss { total: denoise.add(&recon.scale(w)), denoise: d, recon: r }
    } else {
        let d = denoise.item().to_f64_lossless();
        Loss { total: denoise, denoise: d, recon: 0.0 }
    }
}

/// Initial latent noise for a clip of `frames` frames.
pub fn initial_noise(seed: u64, frames: usize, latent_numel: usize) -> Vec<f64> {
    normal_vec(&mut seed_all(seed).stream(STREAM_SAMPLE), frames * latent_numel)
}

/// Generates `poses.dim(0)` frames for one reference by DDIM.
///
/// With `motion` the frames are denoised jointly through the motion
/// modules; without it every frame is denoised on its own from its slice
/// of the same initial noise. Returns decoded frames in network range.
pub fn sample_sequence<T: Element>(
    model: &Model<'_, T>,
    sched: &NoiseSchedule,
    reference: &Tensor<T>,
    poses: &Tensor<T>,
    seed: u64,
    motion: bool,
) -> Tensor<T> {
    let cfg = model.cfg;
    let n = poses.dim(0);
    let (h, w) = cfg.latent_hw();
    let shape = [n, cfg.latent_channels(), h, w];
    let per_frame = shape[1] * h * w;
    let cond = model.condition(reference);
    let pose = model.pose_residual(poses);
    let mut x = initial_noise(seed, n, per_frame);
    let tree = seed_all(seed);
    // Pixel-space latents live in [-1, 1]; learned latents have no fixed range.
    let clip = cfg.uses_identity_codec().then_some(1.0);
    for (i, (t, tp)) in sched.ddim_pairs(cfg.diffusion.sampler_steps).into_iter().enumerate() {
        let z_t = Tensor::<T>::from_f64_slice(&x, &shape);
        let eps = model.predict_noise(&z_t, &vec![t as usize; n], &cond, Some(&pose), n, motion);
        let eps: Vec<f64> = eps.data().iter().map(|v| v.to_f64_lossless()).collect();
        let z = (cfg.diffusion.eta > 0.0).then(|| normal_vec(&mut tree.substream(STREAM_SAMPLE, i as u64 + 1), x.len()));
        x = sched.ddim_step(&x, &eps, t, tp, cfg.diffusion.eta, z.as_deref(), clip);
    }
    model.decode(&Tensor::from_f64_slice(&x, &shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::nets::ParameterArchive;
    use crate::seed::seed_all;
    use crate::tensor::testing::pseudo_random;

    fn batch(cfg: &RunConfig, clips: usize, frames: usize) -> Batch<f64> {
        let (h, w) = (cfg.canvas.height, cfg.canvas.width);
        let img = |n: usize, s: u64| Tensor::from_vec(pseudo_random(n * 3 * h * w, s), &[n, 3, h, w]);
        Batch { references: img(clips, 1), poses: img(clips * frames, 2), targets: img(clips * frames, 3), frames }
    }

    #[test]
    fn stage_two_first_loss_equals_frame_independent_loss() {
        let cfg = RunConfig::micro();
        let archive = ParameterArchive::init(&cfg, 3);
        let sched = NoiseSchedule::from_config(&cfg.diffusion).unwrap();
        let m = Model::new(&cfg, archive.to_params::<f64>(&[]));
        let b = batch(&cfg, 1, 3);
        let (h, w) = cfg.latent_hw();
        let draws = Draws::sample(&mut seed_all(1).stream("t"), 1, 3, 4 * h * w, cfg.diffusion.steps);
        let two = training_loss(&m, &sched, &b, &draws, Stage::Two);
        // Same frames as three single-frame samples sharing the reference.
        let single = Batch {
            references: b.references.index_select0(&[0, 0, 0]),
            poses: b.poses.clone(),
            targets: b.targets.clone(),
            frames: 1,
        };
        let d1 = Draws { timesteps: vec![draws.timesteps[0]; 3], noise: draws.noise.clone() };
        let one = training_loss(&m, &sched, &single, &d1, Stage::One);
        assert!((two.denoise - one.denoise).abs() <= 1e-6, "{} vs {}", two.denoise, one.denoise);
        assert_eq!(two.recon, 0.0);
        assert!(one.recon > 0.0);
    }

    #[test]
    fn step_zero_loss_is_finite_and_below_twice_noise_energy() {
        let cfg = RunConfig::default();
        let archive = ParameterArchive::init(&cfg, 1);
        let sched = NoiseSchedule::from_config(&cfg.diffusion).unwrap();
        let m = Model::new(&cfg, archive.to_params::<f32>(&[]));
        let b = batch(&cfg, 2, 1);
        let b = Batch {
            references: Tensor::from_f64_slice(&b.references.to_vec(), b.references.shape()),
            poses: Tensor::from_f64_slice(&b.poses.to_vec(), b.poses.shape()),
            targets: Tensor::from_f64_slice(&b.targets.to_vec(), b.targets.shape()),
            frames: 1,
        };
        let draws = Draws::sample(&mut seed_all(2).stream("t"), 2, 1, 3 * 64 * 64, 1000);
        let l = training_loss(&m, &sched, &b, &draws, Stage::One);
        let energy = draws.noise.iter().map(|v| v * v).sum::<f64>() / draws.noise.len() as f64;
        assert!(l.denoise.is_finite() && l.denoise > 0.0 && l.denoise < 2.0 * energy, "loss {} energy {}", l.denoise, energy);
    }

    #[test]
    fn sampling_is_deterministic_and_joint_equals_independent_at_init() {
        let cfg = RunConfig::micro();
        let m = Model::new(&cfg, ParameterArchive::init(&cfg, 3).to_params::<f32>(&[]));
        let sched = NoiseSchedule::from_config(&cfg.diffusion).unwrap();
        let reference = Tensor::from_f64_slice(&pseudo_random(3 * 256, 1), &[1, 3, 16, 16]);
        let poses = Tensor::from_f64_slice(&pseudo_random(2 * 3 * 256, 2), &[2, 3, 16, 16]);
        let a = sample_sequence(&m, &sched, &reference, &poses, 9, true);
        let b = sample_sequence(&m, &sched, &reference, &poses, 9, true);
        let c = sample_sequence(&m, &sched, &reference, &poses, 9, false);
        assert_eq!(a.data(), b.data());
        assert_eq!(a.data(), c.data());
        assert_eq!(a.shape(), &[2, 3, 16, 16]);
    }
}
