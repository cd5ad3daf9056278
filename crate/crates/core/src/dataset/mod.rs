//! Motion corpora: ingestion, preprocessing, augmentation and synthetic data.

mod cache;
mod clip;
mod expmap;
pub mod h36m;
mod manifest;
mod ops;
pub mod synthetic;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use clip::MotionClip;
pub use expmap::{parse_expmap_text, parse_expmap_text_with};
pub use manifest::{
    build_manifest, export_synthetic, ClipRecord, Dataset, DatasetManifest, Preprocess, Protocol, Split,
    BUILTIN_H36M,
};
pub use ops::{augment_rotation, downsample, downsample_all};
pub use synthetic::{biped_skeleton, chain_skeleton, make_synthetic_dataset, SyntheticPreset, SyntheticSpec};
