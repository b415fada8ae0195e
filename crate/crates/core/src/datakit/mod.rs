//! Synthetic dataset construction: patch extraction, augmentation, low-pass
//! conditioning, layered random models, and the on-disk corpus builder.

mod augment;
mod builder;
mod layered;
mod lowpass;
mod manifest;
mod patches;

pub use augment::{augment, elastic_deform, hflip, vflip, AugmentationConfig};
pub use builder::{build_training_set, BuildOptions};
pub use layered::{random_layered_model, LayerStats};
pub use lowpass::lowpass_impedance;
pub use manifest::{DatasetEntry, DatasetManifest, Normalization, WaveletParams, MANIFEST_FORMAT};
pub use patches::{extract_patches, PatchSpec};
