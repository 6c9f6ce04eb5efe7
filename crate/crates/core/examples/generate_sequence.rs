//! Generates a pose-driven frame sequence for a reference image, jointly
//! (through the motion modules) and frame by frame, and writes sprite
//! sheets of both.
//!
//! Uses a briefly trained 16x16 model, so the frames are rough; the point
//! is the interface. `cargo run --example generate_sequence -- [out_dir]`

use std::path::{Path, PathBuf};

use posesprite::config::RunConfig;
use posesprite::dataset::imageio::save_png;
use posesprite::dataset::pack_sprite_sheet;
use posesprite::dataset::synthetic::{action_poses, SyntheticCharacter};
use posesprite::metrics::{subject_consistency, PyramidExtractor};
use posesprite::nets::ParameterArchive;
use posesprite::pipeline::{generate, train_stage1, FrameMode, TrainOptions, TripletData};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::micro();
    let ch = SyntheticCharacter::from_seed("gen", 8);
    let reference = ch.reference(cfg.canvas);
    let idle = ch.sequence("idle", 4, cfg.canvas);
    let triplets: Vec<_> = idle
        .frames()
        .iter()
        .zip(idle.poses())
        .map(|(f, p)| (reference.clone(), p.clone(), f.pixels().clone()))
        .collect();
    let mut archive = ParameterArchive::init(&cfg, cfg.seed);
    train_stage1(&mut archive, &TripletData::from_parts(&cfg, &triplets)?, TrainOptions::steps(10))?;

    let poses = action_poses("jump", 4, cfg.canvas);
    for (name, mode) in [("joint", FrameMode::Joint), ("independent", FrameMode::Independent)] {
        let frames = generate(&archive, &reference, &poses, 21, mode)?;
        let path = out.join(format!("{name}.png"));
        save_png(&path, &pack_sprite_sheet(&frames, (1, frames.len()))?)?;
        println!("{name:<12} consistency {:.4} -> {}", subject_consistency(&frames, &PyramidExtractor)?, path.display());
    }

    // Same seed, same frames.
    let a = generate(&archive, &reference, &poses, 21, FrameMode::Auto)?;
    let b = generate(&archive, &reference, &poses, 21, FrameMode::Auto)?;
    println!("repeatable: {}", a == b);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("posesprite_generate"));
    std::fs::create_dir_all(&out)?;
    run_example(&out)
}
