//! Initializes a parameter archive, inspects its groups and round-trips it
//! through a checkpoint directory.
//!
//! `cargo run --example checkpoint -- [out_dir]`

use std::path::{Path, PathBuf};

use posesprite::config::RunConfig;
use posesprite::nets::{Group, ParameterArchive};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    for (name, cfg) in [("micro", RunConfig::micro()), ("default", RunConfig::default())] {
        let archive = ParameterArchive::init(&cfg, cfg.seed);
        println!("{name}: {} parameters", archive.num_params());
        for g in Group::ALL {
            println!("  {:<13} {:>9}", g.prefix(), archive.group_params(g));
        }
    }

    let cfg = RunConfig::micro();
    let archive = ParameterArchive::init(&cfg, 99);
    let dir = out.join("init");
    archive.save(&dir)?;
    let loaded = ParameterArchive::load(&dir)?;
    assert_eq!(loaded, archive);
    println!("saved and reloaded {} (stage {}, step {})", dir.display(), loaded.meta.stage, loaded.meta.step);
    println!("denoiser digest {}", &loaded.group_digest(Group::Denoiser)[..16]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("posesprite_ckpt"));
    run_example(&out)
}
