//! Depth-map data layer: container type, file formats, normal estimation,
//! synthetic face generation, degradation, and dataset manifests.

pub mod degrade;
pub mod io;
pub mod manifest;
pub mod map;
pub mod synth;

pub use degrade::{degrade, DegradeConfig};
pub use io::{load_dmf, load_pgm16, save_dmf};
pub use manifest::{
    build_dataset, load_pair, DatasetManifest, ManifestRecord, Split, SynthSpec, Variation,
    ALL_VARIATIONS,
};
pub use map::{compute_normal_map, resize_normalize, DepthMap, NormalMap, CANONICAL_SIZE, DEPTH_MAX};
pub use synth::{mix_seed, synth_face, IdentityParams, FACE_SIZE};
