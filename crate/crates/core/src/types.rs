//! Domain value types. Constructors validate their invariants; pixel data
//! is `ndarray::Array3<f64>` laid out as `(H, W, channels)` with values in
//! `[0, 1]`.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::config::Canvas;
use crate::error::{Error, Result};

pub const NUM_KEYPOINTS: usize = 18;
pub const NUM_BONES: usize = 17;

/// OpenPose-18 keypoint order.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
];

/// OpenPose-18 limb list (0-based keypoint indices).
pub const BONES: [(usize, usize); NUM_BONES] = [
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (1, 8),
    (8, 9),
    (9, 10),
    (1, 11),
    (11, 12),
    (12, 13),
    (1, 0),
    (0, 14),
    (14, 16),
    (0, 15),
    (15, 17),
];

fn check_unit_range(pixels: &Array3<f64>, what: &str) -> Result<()> {
    if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invariant("pixel_values_in_unit_range", format!("{what} contains {v}")));
    }
    Ok(())
}

fn check_canvas(pixels: &Array3<f64>, canvas: Canvas, what: &str) -> Result<()> {
    let (h, w, _) = pixels.dim();
    if (h, w) != (canvas.height, canvas.width) {
        return Err(Error::Shape(format!(
            "{what} is {h}x{w}, canvas is {}x{}",
            canvas.height, canvas.width
        )));
    }
    Ok(())
}

/// The character reference image `C`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceImage {
    pixels: Array3<f64>,
    character_id: String,
}

impl ReferenceImage {
    pub fn new(pixels: Array3<f64>, character_id: impl Into<String>) -> Result<Self> {
        if pixels.dim().2 != 4 {
            return Err(Error::invariant("reference_is_rgba", format!("{} channels", pixels.dim().2)));
        }
        check_unit_range(&pixels, "reference image")?;
        Ok(Self {
            pixels,
            character_id: character_id.into(),
        })
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn character_id(&self) -> &str {
        &self.character_id
    }

    pub fn check_canvas(&self, canvas: Canvas) -> Result<()> {
        check_canvas(&self.pixels, canvas, "reference image")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn at(x: f64, y: f64) -> Self {
        Self { x, y, visible: true }
    }

    pub fn hidden() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            visible: false,
        }
    }
}

/// One pose `p_i`: 18 keypoints in pixel coordinates on a canvas.
/// Pixel `(row, col)` has its centre at `(x, y) = (col, row)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseKeypoints {
    points: Vec<Keypoint>,
    canvas: Canvas,
}

impl PoseKeypoints {
    pub fn new(points: Vec<Keypoint>, canvas: Canvas) -> Result<Self> {
        if points.len() != NUM_KEYPOINTS {
            return Err(Error::invariant(
                "pose_has_18_keypoints",
                format!("{} keypoints", points.len()),
            ));
        }
        for (i, p) in points.iter().enumerate() {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.y >= 0.0
                && p.x < canvas.width as f64
                && p.y < canvas.height as f64;
            if p.visible && !inside {
                return Err(Error::invariant(
                    "visible_keypoints_inside_canvas",
                    format!("{} at ({}, {})", KEYPOINT_NAMES[i], p.x, p.y),
                ));
            }
        }
        Ok(Self { points, canvas })
    }

    pub fn all_hidden(canvas: Canvas) -> Self {
        Self {
            points: vec![Keypoint::hidden(); NUM_KEYPOINTS],
            canvas,
        }
    }

    pub fn points(&self) -> &[Keypoint] {
        &self.points
    }

    pub fn canvas(&self) -> Canvas {
        self.canvas
    }
}

/// Rasterized skeleton fed to the pose guider. Background is black.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseImage {
    pixels: Array3<f64>,
    source: PoseKeypoints,
}

impl PoseImage {
    pub(crate) fn from_parts(pixels: Array3<f64>, source: PoseKeypoints) -> Self {
        debug_assert_eq!(pixels.dim(), (source.canvas.height, source.canvas.width, 3));
        Self { pixels, source }
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn source(&self) -> &PoseKeypoints {
        &self.source
    }
}

/// A ground-truth (RGBA) or generated (RGB) frame at position `index`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpriteFrame {
    pixels: Array3<f64>,
    index: usize,
}

impl SpriteFrame {
    pub fn new(pixels: Array3<f64>, index: usize) -> Result<Self> {
        let c = pixels.dim().2;
        if c != 3 && c != 4 {
            return Err(Error::invariant("frame_is_rgb_or_rgba", format!("{c} channels")));
        }
        check_unit_range(&pixels, "sprite frame")?;
        Ok(Self { pixels, index })
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f64> {
        self.pixels
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn is_rgba(&self) -> bool {
        self.pixels.dim().2 == 4
    }
}

/// Frames and poses of one action of one character (`P` and `Î`).
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSequence {
    character_id: String,
    action_name: String,
    frames: Vec<SpriteFrame>,
    poses: Vec<PoseKeypoints>,
}

impl ActionSequence {
    pub fn new(
        character_id: impl Into<String>,
        action_name: impl Into<String>,
        frames: Vec<SpriteFrame>,
        poses: Vec<PoseKeypoints>,
    ) -> Result<Self> {
        let action_name = action_name.into();
        if frames.is_empty() || frames.len() != poses.len() {
            return Err(Error::invariant(
                "sequence_frames_match_poses",
                format!("{action_name}: {} frames, {} poses", frames.len(), poses.len()),
            ));
        }
        if let Some((i, f)) = frames.iter().enumerate().find(|(i, f)| f.index() != *i) {
            return Err(Error::invariant(
                "sequence_indices_contiguous",
                format!("{action_name}: position {i} holds frame index {}", f.index()),
            ));
        }
        Ok(Self {
            character_id: character_id.into(),
            action_name,
            frames,
            poses,
        })
    }

    pub fn character_id(&self) -> &str {
        &self.character_id
    }

    pub fn action_name(&self) -> &str {
        &self.action_name
    }

    pub fn frames(&self) -> &[SpriteFrame] {
        &self.frames
    }

    pub fn poses(&self) -> &[PoseKeypoints] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANVAS: Canvas = Canvas { height: 8, width: 8 };

    #[test]
    fn bones_reference_valid_keypoints() {
        assert_eq!(BONES.len(), 17);
        for (a, b) in BONES {
            assert!(a < NUM_KEYPOINTS && b < NUM_KEYPOINTS && a != b);
        }
    }

    #[test]
    fn pose_rejects_wrong_count_and_out_of_bounds() {
        assert!(PoseKeypoints::new(vec![Keypoint::hidden(); 17], CANVAS).is_err());
        let mut pts = vec![Keypoint::hidden(); 18];
        pts[3] = Keypoint::at(8.0, 1.0);
        assert!(PoseKeypoints::new(pts.clone(), CANVAS).is_err());
        pts[3].visible = false;
        assert!(PoseKeypoints::new(pts, CANVAS).is_ok());
    }

    #[test]
    fn reference_requires_rgba_in_range() {
        assert!(ReferenceImage::new(Array3::zeros((8, 8, 3)), "a").is_err());
        assert!(ReferenceImage::new(Array3::from_elem((8, 8, 4), 1.5), "a").is_err());
        let r = ReferenceImage::new(Array3::zeros((8, 8, 4)), "a").unwrap();
        assert!(r.check_canvas(CANVAS).is_ok());
        assert!(r.check_canvas(Canvas { height: 4, width: 8 }).is_err());
    }

    #[test]
    fn sequence_requires_contiguous_indices() {
        let f = |i| SpriteFrame::new(Array3::zeros((8, 8, 4)), i).unwrap();
        let p = PoseKeypoints::all_hidden(CANVAS);
        assert!(ActionSequence::new("c", "run", vec![f(0), f(1)], vec![p.clone(), p.clone()]).is_ok());
        assert!(ActionSequence::new("c", "run", vec![f(0), f(2)], vec![p.clone(), p.clone()]).is_err());
        assert!(ActionSequence::new("c", "run", vec![f(0)], vec![p.clone(), p]).is_err());
        assert!(ActionSequence::new("c", "run", vec![], vec![]).is_err());
    }
}
