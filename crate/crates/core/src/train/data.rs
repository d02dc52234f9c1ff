//! Loading manifest records into memory at the working resolution.

use std::path::Path;

use crate::depth::{
    degrade, load_pair, mix_seed, resize_normalize, DatasetManifest, DepthMap, Split, SynthSpec,
    Variation, CANONICAL_SIZE,
};
use crate::error::{Error, Result};

/// One training or evaluation sample at the working resolution.
pub struct Sample {
    pub id: u32,
    pub variation: Variation,
    pub name: String,
    pub clean: DepthMap,
    pub degraded: DepthMap,
}

/// Load every record of `split`, resizing both maps to `size`.
///
/// At the canonical resolution the stored degraded maps are used as is. At
/// any other working resolution, resizing a pre-degraded map would average
/// most of its noise away, so when `spec` is given the degradation is
/// reapplied to the resized clean map instead, deterministically per record.
pub fn load_split(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    size: usize,
    spec: Option<&SynthSpec>,
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (idx, rec) in manifest.records.iter().enumerate() {
        if rec.split != split {
            continue;
        }
        let (clean, degraded) = load_pair(dir, rec)?;
        let name = rec
            .clean
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("id{:04}", rec.id));
        let clean = resize_normalize(&clean, size)?;
        let degraded = match spec {
            Some(spec) if size != CANONICAL_SIZE => {
                degrade(&clean, &spec.degrade, mix_seed(spec.seed, &[0x5D, idx as u64]))?
            }
            _ => resize_normalize(&degraded, size)?,
        };
        out.push(Sample {
            id: rec.id,
            variation: rec.variation,
            name,
            clean,
            degraded,
        });
    }
    if out.is_empty() {
        return Err(Error::data(format!("no records in the {split:?} split")));
    }
    Ok(out)
}

/// Sorted distinct identities of a sample list, mapping id to class index.
pub fn class_index(samples: &[Sample]) -> Vec<u32> {
    let mut ids: Vec<u32> = samples.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

pub fn class_of(classes: &[u32], id: u32) -> Result<usize> {
    classes
        .binary_search(&id)
        .map_err(|_| Error::data(format!("identity {id} is not in the class list")))
}
