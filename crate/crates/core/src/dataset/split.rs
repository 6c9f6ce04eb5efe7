use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, Triplet};
use crate::error::{Error, Result};

pub const SPLIT_SCHEMA_VERSION: u32 = 1;

/// Character-level partition of a manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub schema_version: u32,
    pub train_characters: BTreeSet<String>,
    pub test_characters: BTreeSet<String>,
}

impl SplitSpec {
    pub fn new<I, J, S>(train: I, test: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SplitSpec {
            schema_version: SPLIT_SCHEMA_VERSION,
            train_characters: train.into_iter().map(Into::into).collect(),
            test_characters: test.into_iter().map(Into::into).collect(),
        }
    }

    /// The first `n_train` characters (manifest order) train, the rest test.
    pub fn leading(manifest: &Manifest, n_train: usize) -> Self {
        let ids = manifest.character_ids();
        let n = n_train.min(ids.len());
        Self::new(ids[..n].to_vec(), ids[n..].to_vec())
    }

    /// Checks disjointness and coverage of `manifest`.
    pub fn check(&self, manifest: &Manifest) -> Result<()> {
        let overlap: Vec<String> = self.train_characters.intersection(&self.test_characters).cloned().collect();
        if !overlap.is_empty() {
            return Err(Error::CharacterOverlap(overlap));
        }
        let uncovered: Vec<String> = manifest
            .character_ids()
            .into_iter()
            .filter(|c| !self.train_characters.contains(c) && !self.test_characters.contains(c))
            .collect();
        if !uncovered.is_empty() {
            return Err(Error::UncoveredCharacters(uncovered));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: SplitSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: "split file".into(),
            message: e.to_string(),
        })?;
        if s.schema_version != SPLIT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                what: "split",
                found: s.schema_version,
                expected: SPLIT_SCHEMA_VERSION,
            });
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Assigns every triplet to the side its character belongs to.
pub fn split_by_character(m: &Manifest, s: &SplitSpec) -> Result<(Vec<Triplet>, Vec<Triplet>)> {
    s.check(m)?;
    Ok(m.triplets().into_iter().partition(|t| s.train_characters.contains(&t.character_id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::manifest::{CharacterEntry, SequenceEntry};

    fn manifest(chars: &[(&str, usize)]) -> Manifest {
        Manifest::from_characters(
            chars
                .iter()
                .map(|&(id, n)| CharacterEntry {
                    character_id: id.into(),
                    reference_frame_path: format!("{id}/reference.png"),
                    sequences: vec![SequenceEntry {
                        action_name: "run".into(),
                        frame_paths: (0..n).map(|k| format!("{id}/run/frame_{k}.png")).collect(),
                        pose_paths: (0..n).map(|k| format!("{id}/run/pose_{k}.json")).collect(),
                    }],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_character_in_train_leaves_test_empty() {
        let m = manifest(&[("solo", 5)]);
        let (train, test) = split_by_character(&m, &SplitSpec::new(["solo"], [])).unwrap();
        assert_eq!((train.len(), test.len()), (5, 0));
    }

    #[test]
    fn overlap_and_gaps_are_errors() {
        let m = manifest(&[("a", 2), ("b", 3)]);
        assert!(matches!(
            split_by_character(&m, &SplitSpec::new(["a", "b"], ["b"])),
            Err(Error::CharacterOverlap(v)) if v == vec!["b".to_string()]
        ));
        assert!(matches!(
            split_by_character(&m, &SplitSpec::new(["a"], [])),
            Err(Error::UncoveredCharacters(_))
        ));
    }

    #[test]
    fn leading_split_partitions_in_order() {
        let m = manifest(&[("a", 2), ("b", 3), ("c", 4)]);
        let s = SplitSpec::leading(&m, 2);
        let (train, test) = split_by_character(&m, &s).unwrap();
        assert_eq!((train.len(), test.len()), (5, 4));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_conserves_triplets(sizes in proptest::collection::vec(1usize..9, 1..12), cut in 0usize..12) {
                let names: Vec<String> = (0..sizes.len()).map(|i| format!("c{i:02}")).collect();
                let chars: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(sizes.iter().copied()).collect();
                let m = manifest(&chars);
                let s = SplitSpec::leading(&m, cut);
                let (train, test) = split_by_character(&m, &s).unwrap();
                prop_assert_eq!(train.len() + test.len(), m.counts.triplets);
                let tr: BTreeSet<_> = train.iter().map(|t| &t.character_id).collect();
                let te: BTreeSet<_> = test.iter().map(|t| &t.character_id).collect();
                prop_assert!(tr.is_disjoint(&te));
            }
        }
    }
}
