//! Shot-change detection and fixed-length segmentation.

mod detect;
mod hog;
mod manifest;
mod segment;

pub use detect::{detect_shot_changes, difference_series, shot_id, shots_from_series, Shot, Threshold};
pub use hog::{frame_difference, hog_any_size, hog_descriptor, BlockNorm, HogParams};
pub use manifest::{
    build_manifest, detect_corpus, manifest_from_shots, Manifest, ManifestHeader, SegmentRecord, ShotEditParams,
};
pub use segment::{segment_id, segment_shot, segment_shots, Segment, DEFAULT_MIN_LEN, DEFAULT_SEGMENT_LEN};
