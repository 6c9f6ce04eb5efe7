//! Two-stage training, checkpointing and generation.

pub mod adam;
pub mod data;
pub mod train;

pub use adam::Adam;
pub use data::{pose_tensor, SequenceData, TripletData};
pub use train::{train_stage1, train_stage2, StepRecord, TrainOptions, TrainSummary};

use ndarray::Array3;

use crate::diffusion::{sample_sequence, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nets::images::{images_to_tensor, tensor_to_images};
use crate::nets::{Model, ParameterArchive};
use crate::types::{PoseKeypoints, ReferenceImage};

/// How frames of one request relate during sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameMode {
    /// Joint denoising through the motion modules (stage-2 archives).
    Joint,
    /// Each frame on its own.
    Independent,
    /// `Joint` for stage-2 archives, `Independent` otherwise.
    Auto,
}

/// RGB frames in `[0, 1]`, one per pose, for `reference`.
pub fn generate(
    archive: &ParameterArchive,
    reference: &ReferenceImage,
    poses: &[PoseKeypoints],
    seed: u64,
    mode: FrameMode,
) -> Result<Vec<Array3<f64>>> {
    if poses.is_empty() {
        return Err(Error::Empty("no poses to generate".into()));
    }
    let cfg = &archive.config;
    reference.check_canvas(cfg.canvas)?;
    for p in poses {
        if p.canvas() != cfg.canvas {
            return Err(Error::invariant(
                "pose_canvas_matches_config",
                format!("pose canvas {:?} vs config {:?}", p.canvas(), cfg.canvas),
            ));
        }
    }
    let motion = match mode {
        FrameMode::Joint => true,
        FrameMode::Independent => false,
        FrameMode::Auto => archive.meta.stage >= 2,
    };
    let sched = NoiseSchedule::from_config(&cfg.diffusion)?;
    let model = Model::new(cfg, archive.to_params::<f32>(&[]));
    let r = images_to_tensor(&[reference.pixels()]);
    let out = sample_sequence(&model, &sched, &r, &pose_tensor(cfg, poses), seed, motion);
    Ok(tensor_to_images(&out))
}
