//! Dataset manifest: which samples exist, where their clean/degraded files
//! live, and the subject-exclusive train/test split.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::ExecMode;

use super::degrade::{degrade, DegradeConfig};
use super::io::save_dmf;
use super::map::{resize_normalize, DepthMap, CANONICAL_SIZE};
use super::synth::{mix_seed, synth_face, IdentityParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variation {
    Neutral,
    Expression,
    Pose,
    Occlusion,
}

pub const ALL_VARIATIONS: [Variation; 4] = [
    Variation::Neutral,
    Variation::Expression,
    Variation::Pose,
    Variation::Occlusion,
];

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variation::Neutral => "neutral",
            Variation::Expression => "expression",
            Variation::Pose => "pose",
            Variation::Occlusion => "occlusion",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One sample: paths are stored relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: u32,
    pub variation: Variation,
    pub clean: PathBuf,
    pub degraded: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// No identity may appear in both splits.
    pub fn validate(&self) -> Result<()> {
        use std::collections::HashSet;
        let train: HashSet<u32> = self
            .records
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| r.id)
            .collect();
        for r in &self.records {
            if r.split == Split::Test && train.contains(&r.id) {
                return Err(Error::data(format!(
                    "identity {} appears in both train and test splits",
                    r.id
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("manifest serialization"),
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("manifest is not valid: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub train_identities: u32,
    pub test_identities: u32,
    /// Samples per identity; variations cycle neutral, expression, pose,
    /// occlusion, so the first sample of each identity is always neutral.
    pub per_identity: u32,
    pub seed: u64,
    pub degrade: DegradeConfig,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train_identities: 8,
            test_identities: 4,
            per_identity: 4,
            seed: 0,
            degrade: DegradeConfig::default(),
        }
    }
}

/// Generate the whole dataset under `dir` and write `manifest.json` there.
/// Clean maps are generator output passed through [`resize_normalize`];
/// degraded maps are their degraded counterparts. Deterministic in `spec`.
pub fn build_dataset(dir: &Path, spec: &SynthSpec, mode: ExecMode) -> Result<DatasetManifest> {
    if spec.per_identity == 0 || spec.train_identities + spec.test_identities == 0 {
        return Err(Error::config("dataset must have at least one sample"));
    }
    std::fs::create_dir_all(dir)?;
    let total_ids = spec.train_identities + spec.test_identities;
    let ids: Vec<u32> = (0..total_ids).collect();
    let spec_ref = spec.clone();
    let dir_buf = dir.to_path_buf();
    let per_identity: Vec<Result<Vec<ManifestRecord>>> =
        crate::par::map_with(mode, ids, move |id| {
            let params = IdentityParams::new(id, spec_ref.seed);
            let split = if id < spec_ref.train_identities {
                Split::Train
            } else {
                Split::Test
            };
            let mut records = Vec::new();
            for k in 0..spec_ref.per_identity {
                let variation = ALL_VARIATIONS[k as usize % ALL_VARIATIONS.len()];
                let raw = synth_face(&params, variation, mix_seed(spec_ref.seed, &[1, id as u64, k as u64]));
                let clean = resize_normalize(&raw, CANONICAL_SIZE)?;
                let deg = degrade(
                    &clean,
                    &spec_ref.degrade,
                    mix_seed(spec_ref.seed, &[2, id as u64, k as u64]),
                )?;
                let clean_name = format!("id{id:04}_s{k:02}_{variation}.dmf");
                let deg_name = format!("id{id:04}_s{k:02}_{variation}_deg.dmf");
                save_dmf(&dir_buf.join(&clean_name), &clean)?;
                save_dmf(&dir_buf.join(&deg_name), &deg)?;
                records.push(ManifestRecord {
                    id,
                    variation,
                    clean: PathBuf::from(clean_name),
                    degraded: PathBuf::from(deg_name),
                    split,
                });
            }
            Ok(records)
        });
    let mut records = Vec::new();
    for r in per_identity {
        records.extend(r?);
    }
    let manifest = DatasetManifest { records };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Load a record's depth maps relative to the manifest directory.
pub fn load_pair(dir: &Path, rec: &ManifestRecord) -> Result<(DepthMap, DepthMap)> {
    let clean = super::io::load_dmf(&dir.join(&rec.clean))?;
    let deg = super::io::load_dmf(&dir.join(&rec.degraded))?;
    Ok((clean, deg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_is_deterministic_and_subject_exclusive() {
        let spec = SynthSpec {
            train_identities: 2,
            test_identities: 2,
            per_identity: 2,
            seed: 5,
            degrade: DegradeConfig::default(),
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = build_dataset(d1.path(), &spec, ExecMode::Sequential).unwrap();
        let m2 = build_dataset(d2.path(), &spec, ExecMode::Parallel).unwrap();
        assert!(m1.validate().is_ok());
        assert_eq!(m1.records.len(), 8);
        assert_eq!(m1.records.len(), m2.records.len());
        for (a, b) in m1.records.iter().zip(m2.records.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.clean, b.clean);
            let (c1, g1) = load_pair(d1.path(), a).unwrap();
            let (c2, g2) = load_pair(d2.path(), b).unwrap();
            assert_eq!(c1.values, c2.values);
            assert_eq!(g1.values, g2.values);
        }
    }

    #[test]
    fn first_sample_per_identity_is_neutral() {
        let spec = SynthSpec {
            train_identities: 1,
            test_identities: 1,
            per_identity: 4,
            seed: 1,
            degrade: DegradeConfig::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(dir.path(), &spec, ExecMode::Sequential).unwrap();
        for id in 0..2 {
            let first = m.records.iter().find(|r| r.id == id).unwrap();
            assert_eq!(first.variation, Variation::Neutral);
        }
    }

    #[test]
    fn overlapping_split_rejected() {
        let rec = |id, split| ManifestRecord {
            id,
            variation: Variation::Neutral,
            clean: PathBuf::from("a.dmf"),
            degraded: PathBuf::from("b.dmf"),
            split,
        };
        let m = DatasetManifest {
            records: vec![rec(1, Split::Train), rec(1, Split::Test)],
        };
        assert!(matches!(m.validate(), Err(Error::Data(_))));
    }

    #[test]
    fn manifest_roundtrips_as_json_array() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = DatasetManifest {
            records: vec![ManifestRecord {
                id: 3,
                variation: Variation::Pose,
                clean: PathBuf::from("c.dmf"),
                degraded: PathBuf::from("d.dmf"),
                split: Split::Test,
            }],
        };
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.is_array());
        assert_eq!(v[0]["variation"], "pose");
        assert_eq!(v[0]["split"], "test");
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.records.len(), 1);
        assert_eq!(back.records[0].id, 3);
    }
}
