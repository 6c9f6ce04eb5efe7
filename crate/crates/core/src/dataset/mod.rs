//! Sprite-sheet assets, pose annotations and (reference, pose, target)
//! triplets with character-level splits.

pub mod imageio;
pub mod manifest;
pub mod pose;
pub mod raster;
pub mod sheet;
pub mod split;
pub mod synthetic;

use std::path::Path;

use ndarray::{Array3, Zip};

pub use manifest::{build_manifest, CharacterEntry, Counts, Manifest, SequenceEntry, Triplet};
pub use pose::{load_pose, rasterize_pose, save_pose};
pub use sheet::{pack_sprite_sheet, slice_sprite_sheet};
pub use split::{split_by_character, SplitSpec};

use crate::error::{Error, Result};
use crate::types::{ActionSequence, PoseKeypoints, ReferenceImage, SpriteFrame};

pub const WHITE: [f64; 3] = [1.0, 1.0, 1.0];

/// `alpha * rgb + (1 - alpha) * bg` per pixel. RGB input passes through.
pub fn composite_background(img: &Array3<f64>, bg: [f64; 3]) -> Array3<f64> {
    let (h, w, c) = img.dim();
    if c == 3 {
        return img.clone();
    }
    assert_eq!(c, 4, "composite_background expects RGB or RGBA");
    let mut out = Array3::zeros((h, w, 3));
    for k in 0..3 {
        Zip::from(out.slice_mut(ndarray::s![.., .., k]))
            .and(img.slice(ndarray::s![.., .., k]))
            .and(img.slice(ndarray::s![.., .., 3]))
            .for_each(|o, &v, &a| *o = a * v + (1.0 - a) * bg[k]);
    }
    out
}

/// A triplet with its images decoded.
#[derive(Clone, Debug)]
pub struct LoadedTriplet {
    pub reference: ReferenceImage,
    pub pose: PoseKeypoints,
    pub target: SpriteFrame,
}

pub fn load_triplet(root: &Path, t: &Triplet) -> Result<LoadedTriplet> {
    let reference = ReferenceImage::new(
        imageio::load_rgba(&manifest::resolve(root, &t.reference_path))?,
        t.character_id.clone(),
    )?;
    let pose = load_pose(&manifest::resolve(root, &t.pose_path))?;
    let target = SpriteFrame::new(imageio::load_rgba(&manifest::resolve(root, &t.target_path))?, t.index)?;
    Ok(LoadedTriplet { reference, pose, target })
}

/// Every sequence of `characters` in `m`, decoded, with its reference.
pub fn load_sequences(root: &Path, m: &Manifest, characters: &[String]) -> Result<Vec<(ReferenceImage, ActionSequence)>> {
    let mut out = Vec::new();
    for c in m.characters.iter().filter(|c| characters.contains(&c.character_id)) {
        let reference = ReferenceImage::new(
            imageio::load_rgba(&manifest::resolve(root, &c.reference_frame_path))?,
            c.character_id.clone(),
        )?;
        for s in &c.sequences {
            let frames = s
                .frame_paths
                .iter()
                .enumerate()
                .map(|(i, p)| SpriteFrame::new(imageio::load_rgba(&manifest::resolve(root, p))?, i))
                .collect::<Result<Vec<_>>>()?;
            let poses = s
                .pose_paths
                .iter()
                .map(|p| load_pose(&manifest::resolve(root, p)))
                .collect::<Result<Vec<_>>>()?;
            let seq = ActionSequence::new(c.character_id.clone(), s.action_name.clone(), frames, poses)
                .map_err(|e| Error::Dataset(format!("{}/{}: {e}", c.character_id, s.action_name)))?;
            out.push((reference.clone(), seq));
        }
    }
    Ok(out)
}
