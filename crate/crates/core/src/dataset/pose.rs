//! OpenPose-18 pose annotations: JSON schema and skeleton rendering.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "canvas": { "height": 64, "width": 64 },
//!   "keypoints": [ { "name": "nose", "x": 31.0, "y": 9.5, "visible": true }, ... ]
//! }
//! ```
//! Keypoints appear in [`KEYPOINT_NAMES`] order.

use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::raster::{draw_disc, draw_segment};
use crate::config::Canvas;
use crate::error::{Error, Result};
use crate::types::{Keypoint, PoseImage, PoseKeypoints, BONES, KEYPOINT_NAMES, NUM_KEYPOINTS};

pub const POSE_SCHEMA_VERSION: u32 = 1;

/// OpenPose 18-colour palette (8-bit). Bone `i` uses entry `i`; joint `j`
/// uses entry `j`.
pub const PALETTE: [[u8; 3]; NUM_KEYPOINTS] = [
    [255, 0, 0],
    [255, 85, 0],
    [255, 170, 0],
    [255, 255, 0],
    [170, 255, 0],
    [85, 255, 0],
    [0, 255, 0],
    [0, 255, 85],
    [0, 255, 170],
    [0, 255, 255],
    [0, 170, 255],
    [0, 85, 255],
    [0, 0, 255],
    [85, 0, 255],
    [170, 0, 255],
    [255, 0, 255],
    [255, 0, 170],
    [255, 0, 85],
];

/// Joint disc radius as a multiple of the bone thickness.
pub const JOINT_RADIUS_FACTOR: f64 = 0.75;

pub fn palette_color(i: usize) -> [f64; 3] {
    PALETTE[i].map(|v| v as f64 / 255.0)
}

/// Renders the skeleton: visible bones as segments of width `thickness`,
/// then visible joints as discs, on black.
pub fn rasterize_pose(kp: &PoseKeypoints, thickness: usize) -> PoseImage {
    let canvas = kp.canvas();
    let mut img = Array3::zeros((canvas.height, canvas.width, 3));
    let pts = kp.points();
    let half = thickness as f64 / 2.0;
    for (i, &(a, b)) in BONES.iter().enumerate() {
        let (pa, pb) = (pts[a], pts[b]);
        if pa.visible && pb.visible {
            draw_segment(&mut img, (pa.x, pa.y), (pb.x, pb.y), half, &palette_color(i));
        }
    }
    for (j, p) in pts.iter().enumerate() {
        if p.visible {
            draw_disc(&mut img, (p.x, p.y), JOINT_RADIUS_FACTOR * thickness as f64, &palette_color(j));
        }
    }
    PoseImage::from_parts(img, kp.clone())
}

#[derive(Serialize, Deserialize)]
struct PoseFile {
    schema_version: u32,
    canvas: Canvas,
    keypoints: Vec<NamedKeypoint>,
}

#[derive(Serialize, Deserialize)]
struct NamedKeypoint {
    name: String,
    x: f64,
    y: f64,
    visible: bool,
}

pub fn pose_to_json(kp: &PoseKeypoints) -> String {
    let file = PoseFile {
        schema_version: POSE_SCHEMA_VERSION,
        canvas: kp.canvas(),
        keypoints: kp
            .points()
            .iter()
            .zip(KEYPOINT_NAMES)
            .map(|(p, name)| NamedKeypoint {
                name: name.to_string(),
                x: p.x,
                y: p.y,
                visible: p.visible,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("pose serializes")
}

pub fn pose_from_json(text: &str) -> Result<PoseKeypoints> {
    let file: PoseFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        what: "pose file".into(),
        message: e.to_string(),
    })?;
    if file.schema_version != POSE_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            what: "pose",
            found: file.schema_version,
            expected: POSE_SCHEMA_VERSION,
        });
    }
    if file.keypoints.len() != NUM_KEYPOINTS {
        return Err(Error::invariant(
            "pose_has_18_keypoints",
            format!("{} keypoints", file.keypoints.len()),
        ));
    }
    for (k, name) in file.keypoints.iter().zip(KEYPOINT_NAMES) {
        if k.name != name {
            return Err(Error::invariant(
                "pose_keypoint_order",
                format!("expected `{name}`, found `{}`", k.name),
            ));
        }
    }
    let points = file
        .keypoints
        .iter()
        .map(|k| Keypoint {
            x: k.x,
            y: k.y,
            visible: k.visible,
        })
        .collect();
    PoseKeypoints::new(points, file.canvas)
}

pub fn load_pose(path: &Path) -> Result<PoseKeypoints> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    pose_from_json(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            what: format!("pose file {}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_pose(path: &Path, kp: &PoseKeypoints) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, pose_to_json(kp)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::dataset::synthetic::standing_pose;

    const CANVAS: Canvas = Canvas { height: 64, width: 64 };

    fn colors(img: &Array3<f64>) -> BTreeSet<[u8; 3]> {
        let (h, w, _) = img.dim();
        (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| [0, 1, 2].map(|k| (img[[r, c, k]] * 255.0).round() as u8))
            .collect()
    }

    #[test]
    fn all_hidden_is_black() {
        let img = rasterize_pose(&PoseKeypoints::all_hidden(CANVAS), 3);
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_bone_on_scanline() {
        // neck -> right shoulder is bone 0
        let mut pts = vec![Keypoint::hidden(); NUM_KEYPOINTS];
        pts[1] = Keypoint::at(0.0, 0.0);
        pts[2] = Keypoint::at(10.0, 0.0);
        let img = rasterize_pose(&PoseKeypoints::new(pts, CANVAS).unwrap(), 1);
        // brute-force scanline oracle
        let mut lit = Vec::new();
        for r in 0..64 {
            for c in 0..64 {
                if (0..3).any(|k| img.pixels()[[r, c, k]] > 0.0) {
                    lit.push((r, c));
                }
            }
        }
        assert_eq!(lit, (0..=10).map(|c| (0, c)).collect::<Vec<_>>());
    }

    #[test]
    fn standing_pose_histogram_is_the_visible_palette() {
        let kp = standing_pose(CANVAS);
        let img = rasterize_pose(&kp, 2);
        let pts = kp.points();
        let mut expected: BTreeSet<[u8; 3]> = BTreeSet::from([[0, 0, 0]]);
        for (i, &(a, b)) in BONES.iter().enumerate() {
            if pts[a].visible && pts[b].visible {
                expected.insert(PALETTE[i]);
            }
        }
        for (j, p) in pts.iter().enumerate() {
            if p.visible {
                expected.insert(PALETTE[j]);
            }
        }
        assert_eq!(colors(img.pixels()), expected);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let pts = (0..NUM_KEYPOINTS).map(|i| Keypoint::at(57.477879402848764 - i as f64 * 0.1, 1.0 / 3.0 + i as f64)).collect();
        let kp = PoseKeypoints::new(pts, CANVAS).unwrap();
        assert_eq!(pose_from_json(&pose_to_json(&kp)).unwrap(), kp);
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let kp = standing_pose(CANVAS);
        assert_eq!(pose_from_json(&pose_to_json(&kp)).unwrap(), kp);
        let bad = pose_to_json(&kp).replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(pose_from_json(&bad), Err(Error::SchemaVersion { .. })));
        let swapped = pose_to_json(&kp).replacen("\"nose\"", "\"neck_\"", 1);
        assert!(pose_from_json(&swapped).is_err());
    }
}
