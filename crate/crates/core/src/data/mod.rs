//! Dataset loading, preprocessing, splitting and batching.
//!
//! A dataset root holds one directory per class (`NT`, `NVT`, `VT`, `NVR`)
//! of JPEG, PNG or `OSIM` raw files. [`load_manifest`] enumerates it,
//! [`split_stratified`] assigns train/val/test, and [`PreparedData`] decodes,
//! resizes and normalises the samples of one task for batching.

mod batch;
mod image;
mod label;
mod manifest;
mod normalize;
mod synth;

pub use batch::{Batch, Batches, PreparedData};
pub use image::{decode_file, is_image_path, probe, resize_to_side, to_tensor, write_png, RawImage, RAW_MAGIC};
pub use label::{ClassLabel, Split};
pub use manifest::{
    compute_class_weights, load_manifest, split_sizes, split_stratified, DatasetManifest, Sample, SampleSource, DEFAULT_FRACTIONS,
};
pub use normalize::{apply_normalization, compute_normalization, normalize_in_place, NormStats, STD_FLOOR};
pub use synth::{synth_generate, synth_image};
