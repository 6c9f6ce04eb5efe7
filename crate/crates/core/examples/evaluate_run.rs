//! Scores a directory of generated frames against ground truth laid out
//! as `<character>/<action>/frame_<k>.png`, and prints the report table.
//!
//! `cargo run --example evaluate_run -- [out_dir]`

use std::path::{Path, PathBuf};

use posesprite::config::Canvas;
use posesprite::dataset::imageio::save_png;
use posesprite::dataset::synthetic::{InventorySpec, SyntheticCharacter};
use posesprite::dataset::{composite_background, WHITE};
use posesprite::metrics::{evaluate_run, PyramidExtractor};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let canvas = Canvas { height: 32, width: 32 };
    let truth = out.join("truth");
    InventorySpec::uniform(2, 1, 5).write(&truth, canvas)?;

    // Stand-in "generated" frames: the right poses drawn with a slightly
    // different appearance.
    let generated = out.join("generated");
    for (i, id) in ["char_00", "char_01"].iter().enumerate() {
        let lookalike = SyntheticCharacter::from_seed(*id, 1000 + i as u64 + 50);
        let seq = lookalike.sequence("crouch", 5, canvas);
        for (k, f) in seq.frames().iter().enumerate() {
            let path = generated.join(id).join("crouch").join(format!("frame_{k}.png"));
            save_png(&path, &composite_background(f.pixels(), WHITE))?;
        }
    }

    let report = evaluate_run(&generated, &truth, &PyramidExtractor)?;
    print!("{}", report.to_table());
    std::fs::write(out.join("report.json"), report.to_json())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("posesprite_eval"));
    run_example(&out)
}
