//! Both training stages on a tiny 16x16 configuration: stage 1 learns
//! appearance and pose from single frames, stage 2 trains only the motion
//! modules on clips and leaves every other parameter group bit-identical.
//!
//! `cargo run --example train_stages -- [out_dir]`

use std::path::{Path, PathBuf};

use posesprite::config::RunConfig;
use posesprite::dataset::synthetic::SyntheticCharacter;
use posesprite::nets::{Group, ParameterArchive};
use posesprite::pipeline::{train_stage1, train_stage2, SequenceData, TrainOptions, TripletData};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::micro();
    let ch = SyntheticCharacter::from_seed("mini", 5);
    let reference = ch.reference(cfg.canvas);
    let walk = ch.sequence("walk", 6, cfg.canvas);

    let triplets: Vec<_> = walk
        .frames()
        .iter()
        .zip(walk.poses())
        .map(|(f, p)| (reference.clone(), p.clone(), f.pixels().clone()))
        .collect();
    let mut archive = ParameterArchive::init(&cfg, cfg.seed);
    let mut opts = TrainOptions::steps(20);
    opts.out_dir = Some(out.join("stage1"));
    let s1 = train_stage1(&mut archive, &TripletData::from_parts(&cfg, &triplets)?, opts)?;
    println!("stage 1: loss {:.4} -> {:.4} over {} steps", s1.first_loss.unwrap(), s1.last_loss.unwrap(), s1.steps_run);

    let before: Vec<String> = Group::STAGE1.iter().map(|&g| archive.group_digest(g)).collect();
    let clips = SequenceData::from_sequences(&cfg, &[(reference, walk)], cfg.training.frames_per_clip)?;
    let mut opts = TrainOptions::steps(10);
    opts.out_dir = Some(out.join("stage2"));
    let s2 = train_stage2(&mut archive, &clips, opts)?;
    println!("stage 2: loss {:.4} -> {:.4} over {} steps", s2.first_loss.unwrap(), s2.last_loss.unwrap(), s2.steps_run);

    let after: Vec<String> = Group::STAGE1.iter().map(|&g| archive.group_digest(g)).collect();
    println!("frozen groups unchanged: {}", before == after);
    println!("checkpoints under {}", out.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("posesprite_train"));
    run_example(&out)
}
