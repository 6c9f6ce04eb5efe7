//! Training and conditioning inputs as network tensors.

use ndarray::Array3;
use rand::seq::index::sample;
use rand::Rng;

use crate::config::RunConfig;
use crate::dataset::{load_sequences, load_triplet, rasterize_pose, Manifest, Triplet};
use crate::diffusion::Batch;
use crate::error::{Error, Result};
use crate::nets::images::images_to_tensor;
use crate::tensor::Tensor;
use crate::types::{ActionSequence, PoseKeypoints, ReferenceImage};
use std::path::Path;

/// Rasterized skeletons `[N, 3, H, W]` in network range.
pub fn pose_tensor(cfg: &RunConfig, poses: &[PoseKeypoints]) -> Tensor<f32> {
    let imgs: Vec<Array3<f64>> = poses
        .iter()
        .map(|p| rasterize_pose(p, cfg.model.pose_thickness).pixels().clone())
        .collect();
    images_to_tensor(&imgs.iter().collect::<Vec<_>>())
}

pub fn image_tensor(img: &Array3<f64>) -> Tensor<f32> {
    images_to_tensor(&[img])
}

/// Single-frame samples for stage 1.
pub struct TripletData {
    references: Vec<Tensor<f32>>,
    /// `(reference index, pose [1, 3, H, W], target [1, 3, H, W])`.
    items: Vec<(usize, Tensor<f32>, Tensor<f32>)>,
}

impl TripletData {
    /// `(reference, pose, target pixels)`; references are deduplicated by
    /// character id.
    pub fn from_parts(cfg: &RunConfig, parts: &[(ReferenceImage, PoseKeypoints, Array3<f64>)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Empty("no training triplets".into()));
        }
        let mut ids: Vec<String> = Vec::new();
        let mut references = Vec::new();
        let mut items = Vec::new();
        for (r, p, target) in parts {
            r.check_canvas(cfg.canvas)?;
            let idx = match ids.iter().position(|i| i == r.character_id()) {
                Some(i) => i,
                None => {
                    ids.push(r.character_id().to_string());
                    references.push(image_tensor(r.pixels()));
                    ids.len() - 1
                }
            };
            items.push((idx, pose_tensor(cfg, std::slice::from_ref(p)), image_tensor(target)));
        }
        Ok(TripletData { references, items })
    }

    pub fn load(cfg: &RunConfig, root: &Path, triplets: &[Triplet]) -> Result<Self> {
        let parts = triplets
            .iter()
            .map(|t| {
                let l = load_triplet(root, t)?;
                Ok((l.reference, l.pose, l.target.into_pixels()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(cfg, &parts)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `size` distinct triplets (fewer if the set is smaller).
    pub fn batch(&self, rng: &mut impl Rng, size: usize) -> Batch<f32> {
        let idx = sample(rng, self.items.len(), size.min(self.items.len())).into_vec();
        self.batch_of(&idx)
    }

    pub fn batch_of(&self, idx: &[usize]) -> Batch<f32> {
        let refs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &self.references[self.items[i].0]).collect();
        let poses: Vec<&Tensor<f32>> = idx.iter().map(|&i| &self.items[i].1).collect();
        let targets: Vec<&Tensor<f32>> = idx.iter().map(|&i| &self.items[i].2).collect();
        Batch {
            references: Tensor::concat(&refs, 0),
            poses: Tensor::concat(&poses, 0),
            targets: Tensor::concat(&targets, 0),
            frames: 1,
        }
    }
}

/// Whole sequences for stage 2.
pub struct SequenceData {
    /// `(reference [1, 3, H, W], poses [n, 3, H, W], frames [n, 3, H, W])`.
    seqs: Vec<(Tensor<f32>, Tensor<f32>, Tensor<f32>)>,
    frames: usize,
}

impl SequenceData {
    /// Keeps sequences with at least `frames` frames.
    pub fn from_sequences(cfg: &RunConfig, seqs: &[(ReferenceImage, ActionSequence)], frames: usize) -> Result<Self> {
        let mut out = Vec::new();
        for (r, s) in seqs.iter().filter(|(_, s)| s.len() >= frames) {
            r.check_canvas(cfg.canvas)?;
            let imgs: Vec<&Array3<f64>> = s.frames().iter().map(|f| f.pixels()).collect();
            out.push((image_tensor(r.pixels()), pose_tensor(cfg, s.poses()), images_to_tensor(&imgs)));
        }
        if out.is_empty() {
            return Err(Error::Empty(format!("no sequence has at least {frames} frames")));
        }
        Ok(SequenceData { seqs: out, frames })
    }

    pub fn load(cfg: &RunConfig, root: &Path, m: &Manifest, characters: &[String], frames: usize) -> Result<Self> {
        Self::from_sequences(cfg, &load_sequences(root, m, characters)?, frames)
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    /// `clips` windows: a uniform sequence, then a start in
    /// `[0, len - frames]`.
    pub fn batch(&self, rng: &mut impl Rng, clips: usize) -> Batch<f32> {
        let n = self.frames;
        let mut refs = Vec::new();
        let mut poses = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..clips {
            let (r, p, f) = &self.seqs[rng.random_range(0..self.seqs.len())];
            let start = rng.random_range(0..=p.dim(0) - n);
            refs.push(r.clone());
            poses.push(p.narrow(0, start, n));
            targets.push(f.narrow(0, start, n));
        }
        Batch {
            references: Tensor::concat(&refs.iter().collect::<Vec<_>>(), 0),
            poses: Tensor::concat(&poses.iter().collect::<Vec<_>>(), 0),
            targets: Tensor::concat(&targets.iter().collect::<Vec<_>>(), 0),
            frames: n,
        }
    }
}
