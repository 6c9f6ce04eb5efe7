//! End-to-end behaviour of the `posesprite` binary on a 16x16 dataset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use posesprite::config::RunConfig;
use posesprite::dataset::imageio::{load_rgba, save_png};
use posesprite::dataset::{composite_background, Manifest, SplitSpec, WHITE};
use posesprite::metrics::ssim;
use posesprite::nets::ParameterArchive;
use posesprite::pipeline::StepRecord;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posesprite")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    config: PathBuf,
}

/// A small 16x16 synthetic dataset with manifest, split and micro config.
fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let o = bin(&["dataset", "synth", "--out", s(&data), "--inventory", "small", "--size", "16"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = bin(&["dataset", "build", "--root", s(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let config = root.join("micro.toml");
    RunConfig::micro().save(&config).unwrap();
    Workspace { _dir: dir, root, data, config }
}

fn records(dir: &Path) -> Vec<StepRecord> {
    std::fs::read_to_string(dir.join("loss.ndjson"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn pose_args(data: &Path, character: &str, action: &str, n: usize) -> Vec<String> {
    (0..n)
        .flat_map(|k| ["--pose".to_string(), data.join(character).join(action).join(format!("pose_{k}.json")).display().to_string()])
        .collect()
}

fn generate(ws: &Workspace, ckpt: &Path, out: &Path, seed: &str) -> Output {
    let reference = ws.data.join("char_03").join("reference.png");
    let mut args: Vec<String> = ["generate", "--checkpoint", s(ckpt), "--reference", s(&reference), "--out", s(out), "--seed", seed]
        .iter()
        .map(|a| a.to_string())
        .collect();
    args.extend(pose_args(&ws.data, "char_03", "crouch", 4));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    bin(&refs)
}

#[test]
fn dataset_build_writes_manifest_and_split() {
    let ws = workspace();
    let m = Manifest::load(&ws.data.join("manifest.json")).unwrap();
    assert_eq!((m.counts.characters, m.counts.sequences, m.counts.triplets), (4, 8, 64));
    let split = SplitSpec::load(&ws.data.join("split.json")).unwrap();
    assert_eq!(split.train_characters.len(), 3);
    assert_eq!(split.test_characters.len(), 1);
    let o = bin(&["dataset", "verify", "--manifest", s(&ws.data.join("manifest.json")), "--split", s(&ws.data.join("split.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn dataset_build_full_inventory_gives_619_triplets() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("full");
    assert_eq!(code(&bin(&["dataset", "synth", "--out", s(&data), "--inventory", "full", "--size", "16"])), 0);
    let o = bin(&["dataset", "build", "--root", s(&data)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("619 triplets") && text.contains("463 train / 156 test"), "{text}");
}

#[test]
fn dataset_build_on_empty_root_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["dataset", "build", "--root", s(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("code=3"));
}

#[test]
fn dataset_verify_rejects_overlapping_split() {
    let ws = workspace();
    let bad = ws.root.join("bad_split.json");
    SplitSpec::new(["char_00", "char_01", "char_02"], ["char_02", "char_03"]).save(&bad).unwrap();
    let o = bin(&["dataset", "verify", "--manifest", s(&ws.data.join("manifest.json")), "--split", s(&bad)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("character overlap"), "{}", stderr(&o));
}

#[test]
fn stage_two_without_checkpoint_is_usage_error() {
    let ws = workspace();
    let o = bin(&["train", "--stage", "2", "--data", s(&ws.data), "--out", s(&ws.root.join("s2"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn train_generate_evaluate_round_trip() {
    let ws = workspace();
    let s1 = ws.root.join("s1");

    // 50-step smoke run logs one record per step.
    let o = bin(&["train", "--stage", "1", "--config", s(&ws.config), "--data", s(&ws.data), "--out", s(&s1)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = records(&s1);
    assert_eq!(recs.len(), 50);
    assert!(recs.iter().enumerate().all(|(i, r)| r.step == i as u64 && r.stage == 1 && r.loss.is_finite()));
    assert_eq!(ParameterArchive::load(&s1.join("final")).unwrap().meta.step, 50);

    // Resume continues the step counter.
    let o = bin(&["train", "--stage", "1", "--data", s(&ws.data), "--out", s(&s1), "--resume", s(&s1.join("final")), "--steps", "55"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = records(&s1);
    assert_eq!(recs.len(), 55);
    assert_eq!(recs[50].step, 50);
    assert_eq!(ParameterArchive::load(&s1.join("final")).unwrap().meta.step, 55);

    // Stage 2 from the stage-1 checkpoint.
    let s2 = ws.root.join("s2");
    let o = bin(&["train", "--stage", "2", "--data", s(&ws.data), "--out", s(&s2), "--init", s(&s1.join("final")), "--steps", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(records(&s2).len(), 3);
    let a2 = ParameterArchive::load(&s2.join("final")).unwrap();
    assert_eq!(a2.meta.stage, 2);

    // Stage-1 checkpoints generate (motion off); same seed, same bytes.
    let (g1, g2) = (ws.root.join("g1"), ws.root.join("g2"));
    for out in [&g1, &g2] {
        let o = generate(&ws, &s1.join("final"), out, "5");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for k in 0..4 {
        let name = format!("frame_{k}.png");
        assert_eq!(std::fs::read(g1.join(&name)).unwrap(), std::fs::read(g2.join(&name)).unwrap());
    }
    let sheet = load_rgba(&g1.join("sheet.png")).unwrap();
    assert_eq!(sheet.dim().1, 4 * 16);
    assert_eq!(std::fs::read(g1.join("sheet.png")).unwrap(), std::fs::read(g2.join("sheet.png")).unwrap());

    let o = generate(&ws, &s2.join("final"), &ws.root.join("g3"), "5");
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    // Wrong-stage checkpoint.
    let s0 = ws.root.join("s0");
    ParameterArchive::init(&RunConfig::micro(), 1).save(&s0).unwrap();
    let o = generate(&ws, &s0, &ws.root.join("g0"), "5");
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

fn copy_sequence(data: &Path, dst: &Path, character: &str, action: &str, frames: usize) {
    let out = dst.join(character).join(action);
    std::fs::create_dir_all(&out).unwrap();
    for k in 0..frames {
        let name = format!("frame_{k}.png");
        std::fs::copy(data.join(character).join(action).join(&name), out.join(&name)).unwrap();
    }
}

#[test]
fn evaluate_reports_perfect_scores_and_matches_hand_aggregation() {
    let ws = workspace();
    let gen = ws.root.join("gen");
    copy_sequence(&ws.data, &gen, "char_03", "crouch", 8);
    copy_sequence(&ws.data, &gen, "char_03", "idle", 8);
    let report = ws.root.join("report").join("metrics.json");
    let o = bin(&["evaluate", "--generated", s(&gen), "--truth", s(&ws.data), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["ssim"]["mean"].as_f64().unwrap(), 1.0);
    assert_eq!(v["psnr"]["mean"], "inf");
    assert_eq!(v["frames"], 16);
    assert!(report.with_extension("txt").exists());

    // Perturb one sequence and aggregate by hand.
    for k in 0..8 {
        let p = gen.join("char_03").join("idle").join(format!("frame_{k}.png"));
        let img = composite_background(&load_rgba(&p).unwrap(), WHITE).mapv(|x| (x * 0.9 + 0.05 * (k as f64 / 8.0)).clamp(0.0, 1.0));
        save_png(&p, &img).unwrap();
    }
    let o = bin(&["evaluate", "--generated", s(&gen), "--truth", s(&ws.data), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let mut vals = Vec::new();
    for action in ["crouch", "idle"] {
        for k in 0..8 {
            let rel = format!("char_03/{action}/frame_{k}.png");
            let g = composite_background(&load_rgba(&gen.join(&rel)).unwrap(), WHITE);
            let t = composite_background(&load_rgba(&ws.data.join(&rel)).unwrap(), WHITE);
            vals.push(ssim(&g, &t).unwrap());
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let std = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
    assert!((v["ssim"]["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((v["ssim"]["std"].as_f64().unwrap() - std).abs() < 1e-12);
    assert_eq!(v["psnr"]["excluded_infinite"], 8);
}

#[test]
fn evaluate_names_missing_frame() {
    let ws = workspace();
    let gen = ws.root.join("gen");
    copy_sequence(&ws.data, &gen, "char_03", "crouch", 8);
    std::fs::remove_file(gen.join("char_03/crouch/frame_5.png")).unwrap();
    let o = bin(&["evaluate", "--generated", s(&gen), "--truth", s(&ws.data), "--out", s(&ws.root.join("r.json"))]);
    assert_eq!(code(&o), 6);
    let err = stderr(&o);
    assert!(err.contains("char_03/crouch/frame_5.png"), "{err}");
}
