//! Volumes, preprocessing, spatial-context extraction, splits and synthetic
//! data.

mod clahe;
mod context;
mod prepared;
mod preprocess;
mod render;
mod resample;
mod split;
mod synth;
mod volume;

pub use clahe::{clahe, ClaheParams};
pub use context::{
    extract_contexts, organ_slice_range, step_in_slices, ContextMode, SpatialContext,
};
pub use prepared::{prepare_scan, PreparedScan, Preprocessing};
pub use preprocess::{preprocess_slice, Window, DEFAULT_WINDOW};
pub use render::{outline, overlay_slice, save_gray, save_rgb, OUTLINE_GT, OUTLINE_OVERLAP, OUTLINE_PRED};
pub use resample::{resample_inplane, ResampleKind};
pub use split::{split_by_scan, FoldSpec, ScanSplit};
pub use synth::{synth_generate, synth_generate_with, SynthParams};
pub use volume::{
    load_volume, mask_path_for, read_mask, read_volume, write_mask, write_volume, MaskVolume,
    Spacing, StorageType, Volume,
};
