use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::data::{SequenceData, TripletData};
use crate::diffusion::{training_loss, Batch, Draws, NoiseSchedule, Stage};
use crate::error::{Error, Result};
use crate::nets::{Model, ParameterArchive};
use crate::seed::{seed_all, STREAM_NOISE, STREAM_SHUFFLE};

pub const LOSS_LOG: &str = "loss.ndjson";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const FINAL_DIR: &str = "final";

/// One line of the loss log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub stage: u8,
    pub loss: f64,
    /// Seconds since this training call started.
    pub wallclock: f64,
}

/// Called after every step; return `false` to stop early.
pub type StepHook<'a> = dyn FnMut(&StepRecord, &ParameterArchive) -> bool + 'a;

pub struct TrainOptions<'a> {
    /// Step count at which the stage is complete.
    pub steps: u64,
    /// Receives the loss log, periodic checkpoints and the final archive.
    pub out_dir: Option<PathBuf>,
    pub hook: Option<&'a mut StepHook<'a>>,
}

impl<'a> TrainOptions<'a> {
    pub fn steps(steps: u64) -> Self {
        TrainOptions { steps, out_dir: None, hook: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    pub steps_run: u64,
    pub final_step: u64,
}

fn prepare(archive: &mut ParameterArchive, stage: Stage) -> Result<()> {
    let found = archive.meta.stage;
    match (stage, found) {
        (Stage::One, 0) | (Stage::Two, 1) => {
            archive.meta.stage = stage.number();
            archive.meta.step = 0;
            archive.optimizer = None;
        }
        (Stage::One, 1) | (Stage::Two, 2) => {}
        (Stage::One, _) => return Err(Error::Stage { found, expected: "0 or 1" }),
        (Stage::Two, _) => return Err(Error::Stage { found, expected: "1 or 2" }),
    }
    archive.check_against(&archive.config)
}

fn run(
    archive: &mut ParameterArchive,
    stage: Stage,
    mut next_batch: impl FnMut(&mut rand_chacha::ChaCha8Rng) -> Batch<f32>,
    opts: TrainOptions<'_>,
) -> Result<TrainSummary> {
    prepare(archive, stage)?;
    let cfg = archive.config.clone();
    let sched = NoiseSchedule::from_config(&cfg.diffusion)?;
    let lr = match stage {
        Stage::One => cfg.training.lr_stage1,
        Stage::Two => cfg.training.lr_stage2,
    };
    let adam = Adam::new(lr);
    let tree = seed_all(cfg.seed);
    let (h, w) = cfg.latent_hw();
    let latent_numel = cfg.latent_channels() * h * w;
    let mut log = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join(LOSS_LOG);
            Some(OpenOptions::new().create(true).append(true).open(&p).map_err(|e| Error::io(&p, e))?)
        }
        None => None,
    };
    let mut hook = opts.hook;
    let start = Instant::now();
    let mut state = archive.optimizer.take().unwrap_or_default();
    let mut summary = TrainSummary { first_loss: None, last_loss: None, steps_run: 0, final_step: archive.meta.step };

    while archive.meta.step < opts.steps {
        let step = archive.meta.step;
        let batch = next_batch(&mut tree.substream(STREAM_SHUFFLE, step));
        let draws = Draws::sample(
            &mut tree.substream(STREAM_NOISE, step),
            batch.clips(),
            batch.frames,
            latent_numel,
            cfg.diffusion.steps,
        );
        let model = Model::new(&cfg, archive.to_params::<f32>(stage.trainable()));
        let loss = training_loss(&model, &sched, &batch, &draws, stage);
        let value = loss.total.item() as f64;
        if !value.is_finite() {
            archive.optimizer = Some(state);
            return Err(Error::NonFiniteLoss { step: step as usize });
        }
        let grads = model.params.collect_grads(&loss.total.backward());
        adam.step(archive, &grads, &mut state);
        archive.meta.step += 1;

        let rec = StepRecord { step, stage: stage.number(), loss: value, wallclock: start.elapsed().as_secs_f64() };
        if let Some(f) = log.as_mut() {
            write_record(f, &rec, opts.out_dir.as_deref().unwrap())?;
        }
        summary.first_loss.get_or_insert(value);
        summary.last_loss = Some(value);
        summary.steps_run += 1;
        log::debug!("stage {} step {step} loss {value:.5}", stage.number());

        let stop = hook.as_mut().is_some_and(|h| !h(&rec, archive));
        if let Some(dir) = &opts.out_dir {
            if archive.meta.step % cfg.training.checkpoint_every as u64 == 0 {
                archive.optimizer = Some(state.clone());
                archive.save(&dir.join(CHECKPOINT_DIR))?;
                archive.optimizer = None;
            }
        }
        if stop {
            break;
        }
    }
    archive.optimizer = Some(state);
    summary.final_step = archive.meta.step;
    if let Some(dir) = &opts.out_dir {
        archive.save(&dir.join(FINAL_DIR))?;
    }
    Ok(summary)
}

fn write_record(f: &mut File, rec: &StepRecord, dir: &Path) -> Result<()> {
    let line = serde_json::to_string(rec).expect("record serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(dir.join(LOSS_LOG), e))
}

/// Stage 1: denoiser, ReferenceNet, pose guider, embedder and codec learn
/// from single (reference, pose, target) triplets. Accepts a fresh archive
/// (stage 0) or resumes a stage-1 one.
pub fn train_stage1(archive: &mut ParameterArchive, data: &TripletData, opts: TrainOptions<'_>) -> Result<TrainSummary> {
    let bs = archive.config.training.batch_size;
    run(archive, Stage::One, |rng| data.batch(rng, bs), opts)
}

/// Stage 2: only the motion modules learn, from clips of
/// `frames_per_clip` consecutive frames. Requires a stage-1 archive (or
/// resumes a stage-2 one); every other group stays bit-identical.
pub fn train_stage2(archive: &mut ParameterArchive, data: &SequenceData, opts: TrainOptions<'_>) -> Result<TrainSummary> {
    let bs = archive.config.training.batch_size;
    run(archive, Stage::Two, |rng| data.batch(rng, bs), opts)
}
