//! Procedural sprite characters for fixtures and desk-scale experiments.
//!
//! A character is a seeded colour scheme and body proportions; an action
//! is a parametric joint-angle cycle. Rendering draws the body along the
//! same skeleton the pose annotations describe, so pose and target agree.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::imageio::save_png;
use super::manifest::{CharacterEntry, Manifest, SequenceEntry, REFERENCE_FILE};
use super::pose::save_pose;
use super::raster::{draw_disc, draw_segment};
use crate::config::Canvas;
use crate::error::Result;
use crate::types::{ActionSequence, Keypoint, PoseKeypoints, ReferenceImage, SpriteFrame};

pub const ACTIONS: [&str; 6] = ["crouch", "idle", "jump", "kick", "walk", "wave"];

/// Joint angles in radians, measured from straight down.
#[derive(Clone, Copy, Debug, Default)]
struct Stance {
    lift: f64,
    lean: f64,
    r_shoulder: f64,
    r_elbow: f64,
    l_shoulder: f64,
    l_elbow: f64,
    r_hip: f64,
    r_knee: f64,
    l_hip: f64,
    l_knee: f64,
}

fn stance(action: &str, phase: f64) -> Stance {
    let s = phase.sin();
    let c = phase.cos();
    match action {
        "walk" => Stance {
            r_shoulder: -0.5 * s,
            l_shoulder: 0.5 * s,
            r_elbow: 0.3,
            l_elbow: -0.3,
            r_hip: 0.45 * s,
            l_hip: -0.45 * s,
            r_knee: -0.35 * (1.0 + c).max(0.0),
            l_knee: 0.35 * (1.0 - c).max(0.0),
            ..Default::default()
        },
        "jump" => {
            let up = (phase / 2.0).sin().max(0.0);
            Stance {
                lift: 0.25 * up,
                r_shoulder: 0.4 + 2.2 * up,
                l_shoulder: -0.4 - 2.2 * up,
                r_hip: 0.5 * (1.0 - up),
                l_hip: -0.5 * (1.0 - up),
                r_knee: -0.9 * (1.0 - up),
                l_knee: 0.9 * (1.0 - up),
                ..Default::default()
            }
        }
        "wave" => Stance {
            r_shoulder: 2.4,
            r_elbow: 0.5 * s,
            l_shoulder: -0.2,
            r_hip: 0.1,
            l_hip: -0.1,
            ..Default::default()
        },
        "crouch" => {
            let d = 0.5 * (1.0 - c);
            Stance {
                lift: -0.22 * d,
                lean: 0.1 * d,
                r_shoulder: 0.5 * d,
                l_shoulder: -0.5 * d,
                r_elbow: 0.8 * d,
                l_elbow: -0.8 * d,
                r_hip: 1.0 * d,
                l_hip: -1.0 * d,
                r_knee: -1.6 * d,
                l_knee: 1.6 * d,
            }
        }
        "kick" => {
            let k = (phase / 2.0).sin().max(0.0);
            Stance {
                lean: -0.1 * k,
                r_shoulder: -0.6 * k,
                l_shoulder: 0.8 * k,
                r_hip: 1.4 * k,
                r_knee: -0.4 * (1.0 - k),
                l_hip: -0.15,
                ..Default::default()
            }
        }
        _ => Stance {
            lift: 0.02 * s,
            r_shoulder: 0.15,
            l_shoulder: -0.15,
            r_hip: 0.08,
            l_hip: -0.08,
            ..Default::default()
        },
    }
}

fn limb(origin: (f64, f64), angle: f64, len: f64) -> (f64, f64) {
    (origin.0 + len * angle.sin(), origin.1 + len * angle.cos())
}

/// Keypoints for `stance` on `canvas`, all visible and clamped inside.
fn keypoints(st: &Stance, canvas: Canvas) -> PoseKeypoints {
    let (w, h) = (canvas.width as f64, canvas.height as f64);
    let u = h / 64.0;
    let hip_c = (w / 2.0, h * 0.62 - st.lift * h);
    let neck = (hip_c.0 + 14.0 * u * st.lean.sin(), hip_c.1 - 16.0 * u);
    let nose = (neck.0, neck.1 - 6.0 * u);
    let r_sh = (neck.0 - 5.0 * u, neck.1 + 1.0 * u);
    let l_sh = (neck.0 + 5.0 * u, neck.1 + 1.0 * u);
    let r_el = limb(r_sh, st.r_shoulder, 7.0 * u);
    let r_wr = limb(r_el, st.r_shoulder + st.r_elbow, 7.0 * u);
    let l_el = limb(l_sh, st.l_shoulder, 7.0 * u);
    let l_wr = limb(l_el, st.l_shoulder + st.l_elbow, 7.0 * u);
    let r_hip = (hip_c.0 - 3.5 * u, hip_c.1);
    let l_hip = (hip_c.0 + 3.5 * u, hip_c.1);
    let r_kn = limb(r_hip, st.r_hip, 9.0 * u);
    let r_an = limb(r_kn, st.r_hip + st.r_knee, 9.0 * u);
    let l_kn = limb(l_hip, st.l_hip, 9.0 * u);
    let l_an = limb(l_kn, st.l_hip + st.l_knee, 9.0 * u);
    let r_eye = (nose.0 - 2.0 * u, nose.1 - 1.5 * u);
    let l_eye = (nose.0 + 2.0 * u, nose.1 - 1.5 * u);
    let r_ear = (nose.0 - 4.0 * u, nose.1 - 0.5 * u);
    let l_ear = (nose.0 + 4.0 * u, nose.1 - 0.5 * u);
    let pts = [
        nose, neck, r_sh, r_el, r_wr, l_sh, l_el, l_wr, r_hip, r_kn, r_an, l_hip, l_kn, l_an, r_eye, l_eye, r_ear,
        l_ear,
    ]
    .iter()
    .map(|&(x, y)| Keypoint::at(x.clamp(0.0, w - 1.0), y.clamp(0.0, h - 1.0)))
    .collect();
    PoseKeypoints::new(pts, canvas).expect("clamped keypoints are valid")
}

pub fn standing_pose(canvas: Canvas) -> PoseKeypoints {
    keypoints(&stance("idle", 0.0), canvas)
}

/// `n` poses covering one cycle of `action`.
pub fn action_poses(action: &str, n: usize, canvas: Canvas) -> Vec<PoseKeypoints> {
    (0..n)
        .map(|i| keypoints(&stance(action, 2.0 * PI * i as f64 / n as f64), canvas))
        .collect()
}

/// Appearance of one synthetic character.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCharacter {
    pub id: String,
    pub body: [f64; 3],
    pub limbs: [f64; 3],
    pub head: [f64; 3],
    pub accent: [f64; 3],
    pub outline: [f64; 3],
    pub torso_radius: f64,
    pub limb_radius: f64,
    pub head_radius: f64,
}

impl SyntheticCharacter {
    pub fn from_seed(id: impl Into<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut color = |lo: f64, hi: f64| [0; 3].map(|_: i32| rng.random_range(lo..hi));
        let body = color(0.1, 0.95);
        let limbs = color(0.1, 0.95);
        let head = color(0.55, 1.0);
        let accent = color(0.0, 1.0);
        let outline = color(0.0, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        SyntheticCharacter {
            id: id.into(),
            body,
            limbs,
            head,
            accent,
            outline,
            torso_radius: rng.random_range(2.5..4.5),
            limb_radius: rng.random_range(1.2..2.2),
            head_radius: rng.random_range(4.0..6.0),
        }
    }

    /// RGBA render in `pose`; transparent background.
    pub fn render(&self, pose: &PoseKeypoints) -> Array3<f64> {
        let canvas = pose.canvas();
        let u = canvas.height as f64 / 64.0;
        let mut img = Array3::zeros((canvas.height, canvas.width, 4));
        let p = |i: usize| (pose.points()[i].x, pose.points()[i].y);
        let rgba = |c: [f64; 3]| [c[0], c[1], c[2], 1.0];
        let hip_c = ((p(8).0 + p(11).0) / 2.0, (p(8).1 + p(11).1) / 2.0);
        let limbs = [(2, 3), (3, 4), (5, 6), (6, 7), (8, 9), (9, 10), (11, 12), (12, 13)];
        let head_c = (p(0).0, p(0).1 - 1.0 * u);
        // outline pass
        let o = rgba(self.outline);
        for &(a, b) in &limbs {
            draw_segment(&mut img, p(a), p(b), (self.limb_radius + 0.8) * u, &o);
        }
        draw_segment(&mut img, p(1), hip_c, (self.torso_radius + 0.8) * u, &o);
        draw_segment(&mut img, p(2), p(5), (self.limb_radius + 0.8) * u, &o);
        draw_disc(&mut img, head_c, (self.head_radius + 0.8) * u, &o);
        // fill pass
        for &(a, b) in &limbs {
            draw_segment(&mut img, p(a), p(b), self.limb_radius * u, &rgba(self.limbs));
        }
        draw_segment(&mut img, p(2), p(5), self.limb_radius * u, &rgba(self.body));
        draw_segment(&mut img, p(1), hip_c, self.torso_radius * u, &rgba(self.body));
        draw_segment(&mut img, p(8), p(11), self.limb_radius * u, &rgba(self.accent));
        draw_disc(&mut img, head_c, self.head_radius * u, &rgba(self.head));
        let hat_y = head_c.1 - self.head_radius * u * 0.6;
        draw_segment(
            &mut img,
            (head_c.0 - self.head_radius * u * 0.8, hat_y),
            (head_c.0 + self.head_radius * u * 0.8, hat_y),
            1.0 * u,
            &rgba(self.accent),
        );
        draw_disc(&mut img, p(14), 0.6 * u, &o);
        draw_disc(&mut img, p(15), 0.6 * u, &o);
        img
    }

    pub fn reference(&self, canvas: Canvas) -> ReferenceImage {
        ReferenceImage::new(self.render(&standing_pose(canvas)), self.id.clone()).expect("render is valid RGBA")
    }

    pub fn sequence(&self, action: &str, n: usize, canvas: Canvas) -> ActionSequence {
        let poses = action_poses(action, n, canvas);
        let frames = poses
            .iter()
            .enumerate()
            .map(|(i, p)| SpriteFrame::new(self.render(p), i).expect("render is valid RGBA"))
            .collect();
        ActionSequence::new(self.id.clone(), action, frames, poses).expect("consistent synthetic sequence")
    }
}

/// Characters and per-sequence frame counts of a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct InventorySpec {
    pub characters: Vec<CharacterSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharacterSpec {
    pub id: String,
    pub seed: u64,
    /// `(action name, frame count)`; names unique per character.
    pub sequences: Vec<(String, usize)>,
}

impl InventorySpec {
    /// `n_chars` characters, each with `seqs` sequences of `frames` frames.
    pub fn uniform(n_chars: usize, seqs: usize, frames: usize) -> Self {
        assert!(seqs <= ACTIONS.len(), "at most {} distinct actions", ACTIONS.len());
        InventorySpec {
            characters: (0..n_chars)
                .map(|i| CharacterSpec {
                    id: format!("char_{i:02}"),
                    seed: 1000 + i as u64,
                    sequences: ACTIONS[..seqs].iter().map(|a| (a.to_string(), frames)).collect(),
                })
                .collect(),
        }
    }

    /// 16 characters / 75 sequences / 619 triplets. The first 11
    /// characters hold 55 sequences and 463 triplets; the last 5 hold 20
    /// sequences and 156 triplets.
    pub fn full_inventory() -> Self {
        let mut characters = Vec::new();
        let mut seq_no = 0;
        for i in 0..11 {
            let sequences = ACTIONS[..5]
                .iter()
                .map(|a| {
                    let n = if seq_no < 23 { 9 } else { 8 };
                    seq_no += 1;
                    (a.to_string(), n)
                })
                .collect();
            characters.push(CharacterSpec {
                id: format!("char_{i:02}"),
                seed: 1000 + i as u64,
                sequences,
            });
        }
        seq_no = 0;
        for i in 11..16 {
            let sequences = ACTIONS[..4]
                .iter()
                .map(|a| {
                    let n = if seq_no < 16 { 8 } else { 7 };
                    seq_no += 1;
                    (a.to_string(), n)
                })
                .collect();
            characters.push(CharacterSpec {
                id: format!("char_{i:02}"),
                seed: 1000 + i as u64,
                sequences,
            });
        }
        InventorySpec { characters }
    }

    /// The manifest the written tree would produce, without touching disk.
    pub fn manifest(&self) -> Manifest {
        let mut chars: Vec<CharacterEntry> = self
            .characters
            .iter()
            .map(|c| {
                let mut sequences: Vec<SequenceEntry> = c
                    .sequences
                    .iter()
                    .map(|(a, n)| SequenceEntry {
                        action_name: a.clone(),
                        frame_paths: (0..*n).map(|k| format!("{}/{a}/frame_{k}.png", c.id)).collect(),
                        pose_paths: (0..*n).map(|k| format!("{}/{a}/pose_{k}.json", c.id)).collect(),
                    })
                    .collect();
                sequences.sort_by(|a, b| a.action_name.cmp(&b.action_name));
                CharacterEntry {
                    character_id: c.id.clone(),
                    reference_frame_path: format!("{}/{REFERENCE_FILE}", c.id),
                    sequences,
                }
            })
            .collect();
        chars.sort_by(|a, b| a.character_id.cmp(&b.character_id));
        Manifest::from_characters(chars).expect("synthetic inventory is consistent")
    }

    /// Writes the dataset tree under `root`.
    pub fn write(&self, root: &Path, canvas: Canvas) -> Result<()> {
        for c in &self.characters {
            let ch = SyntheticCharacter::from_seed(c.id.clone(), c.seed);
            save_png(&root.join(&c.id).join(REFERENCE_FILE), ch.reference(canvas).pixels())?;
            for (action, n) in &c.sequences {
                let dir = root.join(&c.id).join(action);
                let seq = ch.sequence(action, *n, canvas);
                for (k, (frame, pose)) in seq.frames().iter().zip(seq.poses()).enumerate() {
                    save_png(&dir.join(format!("frame_{k}.png")), frame.pixels())?;
                    save_pose(&dir.join(format!("pose_{k}.json")), pose)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split::{split_by_character, SplitSpec};

    const CANVAS: Canvas = Canvas { height: 64, width: 64 };

    #[test]
    fn full_inventory_counts_and_split() {
        let m = InventorySpec::full_inventory().manifest();
        assert_eq!((m.counts.characters, m.counts.sequences, m.counts.triplets), (16, 75, 619));
        let (train, test) = split_by_character(&m, &SplitSpec::leading(&m, 11)).unwrap();
        assert_eq!((train.len(), test.len()), (463, 156));
    }

    #[test]
    fn renders_are_opaque_where_drawn_and_differ_between_characters() {
        let a = SyntheticCharacter::from_seed("a", 1).reference(CANVAS);
        let b = SyntheticCharacter::from_seed("b", 2).reference(CANVAS);
        let alpha: Vec<f64> = a.pixels().slice(ndarray::s![.., .., 3]).iter().copied().collect();
        assert!(alpha.iter().all(|&v| v == 0.0 || v == 1.0));
        let covered = alpha.iter().filter(|&&v| v == 1.0).count();
        assert!(covered > 200 && covered < 2500, "{covered}");
        assert_ne!(a.pixels(), b.pixels());
    }

    #[test]
    fn action_cycles_move_the_skeleton() {
        for action in ACTIONS {
            let poses = action_poses(action, 4, CANVAS);
            assert_ne!(poses[0], poses[1], "{action}");
        }
    }
}
