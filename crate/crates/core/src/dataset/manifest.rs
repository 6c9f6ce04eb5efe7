//! Dataset inventory.
//!
//! On-disk layout:
//!
//! ```text
//! root/<character_id>/reference.png
//! root/<character_id>/<action>/frame_<k>.png
//! root/<character_id>/<action>/pose_<k>.json
//! ```
//!
//! Every `frame_<k>.png` needs a matching `pose_<k>.json`, and `k` runs
//! `0..n` without gaps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const REFERENCE_FILE: &str = "reference.png";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub characters: Vec<CharacterEntry>,
    pub counts: Counts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterEntry {
    pub character_id: String,
    /// Relative to the dataset root, `/`-separated.
    pub reference_frame_path: String,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub action_name: String,
    pub frame_paths: Vec<String>,
    pub pose_paths: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub characters: usize,
    pub sequences: usize,
    pub triplets: usize,
}

/// One (reference image, pose image, target image) unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub character_id: String,
    pub action_name: String,
    pub index: usize,
    pub reference_path: String,
    pub pose_path: String,
    pub target_path: String,
}

impl SequenceEntry {
    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }
}

impl Manifest {
    /// Builds a manifest from entries, computing counts.
    pub fn from_characters(characters: Vec<CharacterEntry>) -> Result<Self> {
        let counts = Self::recount(&characters);
        let m = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            characters,
            counts,
        };
        m.validate()?;
        Ok(m)
    }

    fn recount(characters: &[CharacterEntry]) -> Counts {
        Counts {
            characters: characters.len(),
            sequences: characters.iter().map(|c| c.sequences.len()).sum(),
            triplets: characters
                .iter()
                .flat_map(|c| &c.sequences)
                .map(SequenceEntry::len)
                .sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                what: "manifest",
                found: self.schema_version,
                expected: MANIFEST_SCHEMA_VERSION,
            });
        }
        let mut seen = BTreeSet::new();
        for c in &self.characters {
            for s in &c.sequences {
                if s.frame_paths.len() != s.pose_paths.len() {
                    return Err(Error::invariant(
                        "sequence_frames_match_poses",
                        format!(
                            "{}/{}: {} frames, {} poses",
                            c.character_id,
                            s.action_name,
                            s.frame_paths.len(),
                            s.pose_paths.len()
                        ),
                    ));
                }
                if !seen.insert((&c.character_id, &s.action_name)) {
                    return Err(Error::invariant(
                        "unique_character_action",
                        format!("{}/{}", c.character_id, s.action_name),
                    ));
                }
            }
        }
        let recomputed = Self::recount(&self.characters);
        if recomputed != self.counts {
            return Err(Error::invariant(
                "counts_match_entries",
                format!("stored {:?}, recomputed {:?}", self.counts, recomputed),
            ));
        }
        Ok(())
    }

    pub fn character_ids(&self) -> Vec<String> {
        self.characters.iter().map(|c| c.character_id.clone()).collect()
    }

    /// Triplets in manifest order.
    pub fn triplets(&self) -> Vec<Triplet> {
        self.characters
            .iter()
            .flat_map(|c| {
                c.sequences.iter().flat_map(move |s| {
                    s.frame_paths.iter().zip(&s.pose_paths).enumerate().map(move |(i, (f, p))| Triplet {
                        character_id: c.character_id.clone(),
                        action_name: s.action_name.clone(),
                        index: i,
                        reference_path: c.reference_frame_path.clone(),
                        pose_path: p.clone(),
                        target_path: f.clone(),
                    })
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "manifest".into(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push((name.to_string(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn indexed_files(dir: &Path, prefix: &str, ext: &str) -> Result<BTreeMap<usize, String>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(k) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(ext))
            .and_then(|k| k.parse::<usize>().ok())
        {
            out.insert(k, name);
        }
    }
    Ok(out)
}

/// Scans a dataset tree. Ordering is lexicographic by character, then
/// action, then numeric frame index.
pub fn build_manifest(root: &Path) -> Result<Manifest> {
    let mut characters = Vec::new();
    for (cid, cdir) in sorted_dirs(root)? {
        if !cdir.join(REFERENCE_FILE).is_file() {
            return Err(Error::Dataset(format!("character `{cid}` has no {REFERENCE_FILE}")));
        }
        let mut sequences = Vec::new();
        for (action, adir) in sorted_dirs(&cdir)? {
            let seq = format!("{cid}/{action}");
            let frames = indexed_files(&adir, "frame_", ".png")?;
            let poses = indexed_files(&adir, "pose_", ".json")?;
            if frames.is_empty() {
                return Err(Error::Dataset(format!("sequence {seq} has no frames")));
            }
            if frames.len() != poses.len() {
                return Err(Error::Dataset(format!(
                    "sequence {seq} has {} frames but {} poses",
                    frames.len(),
                    poses.len()
                )));
            }
            if let Some(k) = frames.keys().find(|k| !poses.contains_key(k)) {
                return Err(Error::Dataset(format!("sequence {seq}: missing pose file for frame {k}")));
            }
            if let Some((pos, k)) = frames.keys().enumerate().find(|(i, k)| *i != **k) {
                return Err(Error::Dataset(format!(
                    "sequence {seq}: frame indices not contiguous (expected {pos}, found {k})"
                )));
            }
            sequences.push(SequenceEntry {
                action_name: action.clone(),
                frame_paths: frames.values().map(|f| format!("{cid}/{action}/{f}")).collect(),
                pose_paths: poses.values().map(|p| format!("{cid}/{action}/{p}")).collect(),
            });
        }
        characters.push(CharacterEntry {
            reference_frame_path: format!("{cid}/{REFERENCE_FILE}"),
            character_id: cid,
            sequences,
        });
    }
    if characters.is_empty() {
        return Err(Error::NoCharacters(root.to_path_buf()));
    }
    Manifest::from_characters(characters)
}

/// Resolves a manifest-relative path against the dataset root.
pub fn resolve(root: &Path, rel: &str) -> PathBuf {
    rel.split('/').fold(root.to_path_buf(), |p, part| p.join(part))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: PathBuf) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, b"").unwrap();
    }

    #[test]
    fn empty_root_reports_no_characters() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_manifest(dir.path()).unwrap_err();
        assert!(matches!(err, Error::NoCharacters(_)));
        assert!(err.to_string().contains("no characters found"));
    }

    #[test]
    fn unequal_frame_and_pose_counts_name_the_sequence() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path().join("hero/reference.png"));
        for k in 0..4 {
            touch(dir.path().join(format!("hero/run/frame_{k}.png")));
        }
        for k in 0..3 {
            touch(dir.path().join(format!("hero/run/pose_{k}.json")));
        }
        let err = build_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("hero/run"), "{err}");
    }

    #[test]
    fn missing_pose_is_named() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path().join("hero/reference.png"));
        touch(dir.path().join("hero/run/frame_0.png"));
        touch(dir.path().join("hero/run/pose_1.json"));
        let err = build_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("missing pose file for frame 0"), "{err}");
    }

    #[test]
    fn numeric_index_order_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path().join("b/reference.png"));
        touch(dir.path().join("a/reference.png"));
        for k in 0..12 {
            touch(dir.path().join(format!("a/walk/frame_{k}.png")));
            touch(dir.path().join(format!("a/walk/pose_{k}.json")));
        }
        touch(dir.path().join("b/idle/frame_0.png"));
        touch(dir.path().join("b/idle/pose_0.json"));
        let m = build_manifest(dir.path()).unwrap();
        assert_eq!(m.character_ids(), vec!["a", "b"]);
        assert_eq!(m.characters[0].sequences[0].frame_paths[10], "a/walk/frame_10.png");
        assert_eq!(m.counts, Counts { characters: 2, sequences: 2, triplets: 13 });
        assert_eq!(m.triplets()[12].target_path, "b/idle/frame_0.png");
        let again = build_manifest(dir.path()).unwrap();
        assert_eq!(m.to_json(), again.to_json());
        assert_eq!(Manifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn tampered_counts_fail_validation() {
        let mut m = Manifest::from_characters(vec![CharacterEntry {
            character_id: "a".into(),
            reference_frame_path: "a/reference.png".into(),
            sequences: vec![],
        }])
        .unwrap();
        m.counts.triplets = 5;
        assert!(matches!(m.validate(), Err(Error::Invariant { invariant: "counts_match_entries", .. })));
    }
}
