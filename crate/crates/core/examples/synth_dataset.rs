//! Writes a small synthetic sprite dataset, scans it into a manifest and
//! splits it by character.
//!
//! `cargo run --example synth_dataset -- [out_dir]`

use std::path::{Path, PathBuf};

use posesprite::config::Canvas;
use posesprite::dataset::synthetic::InventorySpec;
use posesprite::dataset::{build_manifest, split_by_character, SplitSpec};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let spec = InventorySpec::uniform(4, 2, 6);
    spec.write(out, Canvas { height: 32, width: 32 })?;

    let manifest = build_manifest(out)?;
    let c = &manifest.counts;
    println!("{} characters, {} sequences, {} triplets", c.characters, c.sequences, c.triplets);

    let split = SplitSpec::leading(&manifest, 3);
    let (train, test) = split_by_character(&manifest, &split)?;
    println!("train {:?}: {} triplets", split.train_characters, train.len());
    println!("test  {:?}: {} triplets", split.test_characters, test.len());
    manifest.save(&out.join("manifest.json"))?;
    split.save(&out.join("split.json"))?;

    // The inventory used for the published split.
    let full = InventorySpec::full_inventory().manifest();
    let (tr, te) = split_by_character(&full, &SplitSpec::leading(&full, 11))?;
    println!("16-character inventory: {} triplets, split {} / {}", full.counts.triplets, tr.len(), te.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("posesprite_synth"));
    run_example(&out)?;
    println!("dataset written to {}", out.display());
    Ok(())
}
