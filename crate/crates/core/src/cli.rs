//! Command-line interface. Every command returns a process exit code:
//!
//! | code | meaning                         |
//! |------|---------------------------------|
//! | 0    | success                         |
//! | 1    | usage error                     |
//! | 2    | invariant violation             |
//! | 3    | empty input                     |
//! | 4    | training aborted                |
//! | 5    | checkpoint at the wrong stage   |
//! | 6    | evaluation key mismatch         |
//!
//! Failures print one line to stderr:
//! `error: code=<n> kind=<kind>: <message>`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_config, Canvas, RunConfig};
use crate::dataset::imageio::{load_rgba, save_png};
use crate::dataset::synthetic::InventorySpec;
use crate::dataset::{build_manifest, load_pose, pack_sprite_sheet, split_by_character, Manifest, SplitSpec};
use crate::error::Error;
use crate::metrics::{evaluate_run, IdentityExtractor};
use crate::nets::ParameterArchive;
use crate::pipeline::{generate, train_stage1, train_stage2, FrameMode, SequenceData, TrainOptions, TripletData};
use crate::types::ReferenceImage;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;
pub const EXIT_TRAIN_ABORT: i32 = 4;
pub const EXIT_STAGE: i32 = 5;
pub const EXIT_EVAL_MISMATCH: i32 = 6;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_FILE: &str = "split.json";

#[derive(Debug, Parser)]
#[command(name = "posesprite", version, about = "Pose-guided sprite sequence generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or verify dataset manifests and splits.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run stage-1 or stage-2 training.
    Train(TrainArgs),
    /// Generate frames for a reference and a list of poses.
    Generate(GenerateArgs),
    /// Score generated frames against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Scan a dataset tree; write manifest.json and split.json.
    Build {
        #[arg(long)]
        root: PathBuf,
        /// Output directory (defaults to the root).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Characters (in sorted order) assigned to training; the rest test.
        /// Defaults to 11/16 of the characters.
        #[arg(long)]
        train_count: Option<usize>,
    },
    /// Re-check manifest counts and split disjointness.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Write a synthetic sprite dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Inventory::Small)]
        inventory: Inventory,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Inventory {
    /// 16 characters, 75 sequences, 619 frames.
    Full,
    /// 4 characters with 2 eight-frame sequences each.
    Small,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: u8,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root holding manifest.json and split.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Stage-1 checkpoint to start stage 2 from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Checkpoint of the same stage to continue.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Override the configured step count.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Pose JSON files, one per output frame, in order.
    #[arg(long = "pose", required = true, num_args = 1..)]
    pub poses: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the checkpoint's config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    pub mode: Mode,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Auto,
    Joint,
    Independent,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Report JSON path; the text table goes next to it with a `.txt`
    /// extension.
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed command: exit code, short kind tag and message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, kind: "usage", message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidArgument(_) => (EXIT_USAGE, "usage"),
            Error::Empty(_) | Error::NoCharacters(_) => (EXIT_EMPTY, "empty_input"),
            Error::NonFiniteLoss { .. } => (EXIT_TRAIN_ABORT, "training_abort"),
            Error::Stage { .. } => (EXIT_STAGE, "bad_stage"),
            Error::EvalMismatch(_) => (EXIT_EVAL_MISMATCH, "eval_mismatch"),
            Error::Io { .. } => (EXIT_INVARIANT, "io"),
            _ => (EXIT_INVARIANT, "invariant"),
        };
        Failure { code, kind, message: e.to_string() }
    }
}

pub type CmdResult = Result<(), Failure>;

fn report(r: CmdResult) -> i32 {
    match r {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: code={} kind={}: {}", f.code, f.kind, f.message.replace('\n', " "));
            f.code
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => match cli.command {
            Command::Dataset(d) => cmd_dataset(d),
            Command::Train(a) => cmd_train(&a),
            Command::Generate(a) => cmd_generate(&a),
            Command::Evaluate(a) => cmd_evaluate(&a),
        },
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

fn default_train_count(n: usize) -> usize {
    if n <= 1 {
        n
    } else {
        ((n * 11 + 8) / 16).clamp(1, n - 1)
    }
}

pub fn cmd_dataset(cmd: DatasetCommand) -> i32 {
    report(match cmd {
        DatasetCommand::Build { root, out, train_count } => dataset_build(&root, out.as_deref().unwrap_or(&root), train_count),
        DatasetCommand::Verify { manifest, split } => dataset_verify(&manifest, &split),
        DatasetCommand::Synth { out, inventory, size } => dataset_synth(&out, inventory, size),
    })
}

fn dataset_build(root: &Path, out: &Path, train_count: Option<usize>) -> CmdResult {
    let m = build_manifest(root)?;
    let n = train_count.unwrap_or_else(|| default_train_count(m.counts.characters));
    let split = SplitSpec::leading(&m, n);
    let (train, test) = split_by_character(&m, &split)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    m.save(&out.join(MANIFEST_FILE))?;
    split.save(&out.join(SPLIT_FILE))?;
    println!(
        "manifest: {} characters, {} sequences, {} triplets; split {} train / {} test triplets",
        m.counts.characters,
        m.counts.sequences,
        m.counts.triplets,
        train.len(),
        test.len()
    );
    Ok(())
}

fn dataset_verify(manifest: &Path, split: &Path) -> CmdResult {
    let m = Manifest::load(manifest)?;
    let s = SplitSpec::load(split)?;
    let (train, test) = split_by_character(&m, &s)?;
    println!("ok: {} triplets ({} train / {} test)", m.counts.triplets, train.len(), test.len());
    Ok(())
}

fn dataset_synth(out: &Path, inventory: Inventory, size: usize) -> CmdResult {
    let spec = match inventory {
        Inventory::Full => InventorySpec::full_inventory(),
        Inventory::Small => InventorySpec::uniform(4, 2, 8),
    };
    spec.write(out, Canvas { height: size, width: size })?;
    let m = spec.manifest();
    println!("wrote {} characters / {} triplets to {}", m.counts.characters, m.counts.triplets, out.display());
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> i32 {
    report(train(a))
}

fn train(a: &TrainArgs) -> CmdResult {
    if a.stage == 2 && a.init.is_none() && a.resume.is_none() {
        return Err(Failure::usage("stage 2 needs --init <stage-1 checkpoint> or --resume <checkpoint>"));
    }
    if a.init.is_some() && a.resume.is_some() {
        return Err(Failure::usage("--init and --resume are mutually exclusive"));
    }
    let mut archive = match (&a.resume, &a.init) {
        (Some(p), _) | (None, Some(p)) => {
            if !p.join("metadata.json").exists() {
                return Err(Failure::usage(format!("no checkpoint at {}", p.display())));
            }
            let mut ar = ParameterArchive::load(p)?;
            if a.init.is_some() {
                ar.optimizer = None;
            }
            if let Some(seed) = a.seed {
                ar.config.seed = seed;
                ar.meta.config_hash = ar.config.hash();
            }
            ar
        }
        (None, None) => {
            let mut cfg = match &a.config {
                Some(p) => load_config(p)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            ParameterArchive::init(&cfg, cfg.seed)
        }
    };
    if a.resume.is_some() && archive.meta.stage != a.stage {
        return Err(Error::Stage { found: archive.meta.stage, expected: if a.stage == 1 { "1" } else { "2" } }.into());
    }
    if a.stage == 2 && a.init.is_some() && archive.meta.stage != 1 {
        return Err(Error::Stage { found: archive.meta.stage, expected: "1" }.into());
    }
    let cfg = archive.config.clone();
    let manifest = Manifest::load(a.manifest.as_deref().unwrap_or(&a.data.join(MANIFEST_FILE)))?;
    let split = SplitSpec::load(a.split.as_deref().unwrap_or(&a.data.join(SPLIT_FILE)))?;
    split.check(&manifest)?;
    let train_chars: Vec<String> = split.train_characters.iter().cloned().collect();
    let (train_triplets, _) = split_by_character(&manifest, &split)?;
    let mut opts = TrainOptions::steps(0);
    opts.out_dir = Some(a.out.clone());
    let summary = if a.stage == 1 {
        opts.steps = a.steps.unwrap_or(cfg.training.stage1_steps as u64);
        let data = TripletData::load(&cfg, &a.data, &train_triplets)?;
        train_stage1(&mut archive, &data, opts)?
    } else {
        opts.steps = a.steps.unwrap_or(cfg.training.stage2_steps as u64);
        let data = SequenceData::load(&cfg, &a.data, &manifest, &train_chars, cfg.training.frames_per_clip)?;
        train_stage2(&mut archive, &data, opts)?
    };
    println!(
        "stage {} finished at step {} ({} steps this run), last loss {}",
        a.stage,
        summary.final_step,
        summary.steps_run,
        summary.last_loss.map_or("n/a".into(), |l| format!("{l:.5}"))
    );
    Ok(())
}

pub fn cmd_generate(a: &GenerateArgs) -> i32 {
    report(generate_cmd(a))
}

fn generate_cmd(a: &GenerateArgs) -> CmdResult {
    let archive = ParameterArchive::load(&a.checkpoint)?;
    if archive.meta.stage == 0 {
        return Err(Error::Stage { found: 0, expected: "1 or 2" }.into());
    }
    let reference = ReferenceImage::new(load_rgba(&a.reference)?, "reference")?;
    let poses = a.poses.iter().map(|p| load_pose(p)).collect::<Result<Vec<_>, _>>()?;
    let mode = match a.mode {
        Mode::Auto => FrameMode::Auto,
        Mode::Joint => FrameMode::Joint,
        Mode::Independent => FrameMode::Independent,
    };
    let seed = a.seed.unwrap_or(archive.config.seed);
    let frames = generate(&archive, &reference, &poses, seed, mode)?;
    for (k, f) in frames.iter().enumerate() {
        save_png(&a.out.join(format!("frame_{k}.png")), f)?;
    }
    save_png(&a.out.join("sheet.png"), &pack_sprite_sheet(&frames, (1, frames.len()))?)?;
    println!("wrote {} frames and sheet.png to {}", frames.len(), a.out.display());
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> i32 {
    report(evaluate(a))
}

fn evaluate(a: &EvaluateArgs) -> CmdResult {
    let r = evaluate_run(&a.generated, &a.truth, &IdentityExtractor)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&a.out, r.to_json()).map_err(|e| Error::io(&a.out, e))?;
    let table = a.out.with_extension("txt");
    std::fs::write(&table, r.to_table()).map_err(|e| Error::io(&table, e))?;
    print!("{}", r.to_table());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_train_count_matches_inventory_ratio() {
        assert_eq!(default_train_count(16), 11);
        assert_eq!(default_train_count(4), 3);
        assert_eq!(default_train_count(2), 1);
        assert_eq!(default_train_count(1), 1);
    }

    #[test]
    fn bad_usage_is_exit_1() {
        assert_eq!(run(["posesprite", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["posesprite", "train", "--stage", "3", "--data", "x", "--out", "y"]), EXIT_USAGE);
    }

    #[test]
    fn empty_root_is_exit_3() {
        let d = tempfile::tempdir().unwrap();
        let root = d.path().to_str().unwrap();
        assert_eq!(run(["posesprite", "dataset", "build", "--root", root]), EXIT_EMPTY);
    }
}
