//! Rasterizes an 18-keypoint skeleton in the standard limb palette, saves
//! it as PNG and JSON, and reads the JSON back.
//!
//! `cargo run --example pose_raster -- [out_dir]`

use std::path::{Path, PathBuf};

use posesprite::config::Canvas;
use posesprite::dataset::imageio::save_png;
use posesprite::dataset::synthetic::action_poses;
use posesprite::dataset::{load_pose, pack_sprite_sheet, rasterize_pose, save_pose};
use posesprite::types::{Keypoint, PoseKeypoints, NUM_KEYPOINTS};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let canvas = Canvas { height: 64, width: 64 };
    let poses = action_poses("kick", 6, canvas);
    let images: Vec<_> = poses.iter().map(|p| rasterize_pose(p, 2).pixels().clone()).collect();
    save_png(&out.join("kick_poses.png"), &pack_sprite_sheet(&images, (1, images.len()))?)?;

    // Hidden keypoints draw nothing, and neither do bones touching them.
    let mut points = poses[0].points().to_vec();
    for p in points.iter_mut().skip(14) {
        *p = Keypoint::hidden();
    }
    let partial = PoseKeypoints::new(points, canvas)?;
    let lit = |p: &PoseKeypoints| rasterize_pose(p, 2).pixels().iter().filter(|v| **v > 0.0).count();
    println!("lit values: full {} / face hidden {}", lit(&poses[0]), lit(&partial));

    let path = out.join("pose.json");
    save_pose(&path, &partial)?;
    assert_eq!(load_pose(&path)?, partial);
    println!("{NUM_KEYPOINTS} keypoints round-tripped through {}", path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("posesprite_pose"));
    std::fs::create_dir_all(&out)?;
    run_example(&out)
}
