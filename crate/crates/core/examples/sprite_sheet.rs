//! Renders a character's walk cycle, packs it into a sprite sheet and
//! slices the sheet back into frames.
//!
//! `cargo run --example sprite_sheet -- [out_dir]`

use std::path::{Path, PathBuf};

use posesprite::config::Canvas;
use posesprite::dataset::imageio::{load_rgba, save_png};
use posesprite::dataset::synthetic::SyntheticCharacter;
use posesprite::dataset::{pack_sprite_sheet, slice_sprite_sheet};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let canvas = Canvas { height: 48, width: 48 };
    let hero = SyntheticCharacter::from_seed("hero", 12);
    let walk = hero.sequence("walk", 8, canvas);
    let frames: Vec<_> = walk.frames().iter().map(|f| f.pixels().clone()).collect();

    let sheet = pack_sprite_sheet(&frames, (2, 4))?;
    let path = out.join("walk_sheet.png");
    save_png(&path, &sheet)?;
    println!("sheet {:?} (rows, cols, channels) at {}", sheet.dim(), path.display());

    // PNG stores 8 bits per channel; slicing the reloaded sheet gives the
    // frames back up to that quantization.
    let tiles = slice_sprite_sheet(&load_rgba(&path)?, (2, 4), (48, 48))?;
    let worst = tiles
        .iter()
        .zip(&frames)
        .flat_map(|(t, f)| t.pixels().iter().zip(f.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    println!("{} tiles, max deviation {worst:.4} (<= 0.5/255)", tiles.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("posesprite_sheet"));
    std::fs::create_dir_all(&out)?;
    run_example(&out)
}
